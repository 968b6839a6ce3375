#pragma once

// Analytic Jacobians of the pose-only point prediction with respect to the
// clone errors of the views involved.
//
// With base views (j, k) and target view i,
//   p_po = s * R_ji p_j + theta * t_ji,   s = |[t_jk x] p_k|,
//                                         theta = |[p_k x] R_jk p_j|.
// Attitude terms: A = R_ji p_j * A1 (through s), B (through R_ji),
// C (through theta) is taken as zero, D (through t_ji).
// Position terms: E = R_ji p_j * E1 (through s), F (through t_ji).
// Every term vanishes for clones outside {i, j, k}.

#include "pomsckf/po_geometry.hpp"

#include <cstddef>
#include <span>

namespace pomsckf::pose_only {

template <typename Scalar>
using Row3 = Eigen::Matrix<Scalar, 1, 3>;
template <typename Scalar>
using Mat23 = Eigen::Matrix<Scalar, 2, 3>;

/// d(p / e3'p)_{xy} / dp.
template <typename Scalar>
Mat23<Scalar> projection_jacobian(const Vec3<Scalar>& p) {
  const Scalar iz = Scalar(1) / p(2);
  Mat23<Scalar> J;
  J << iz, Scalar(0), -p(0) * iz * iz,
       Scalar(0), iz, -p(1) * iz * iz;
  return J;
}

/// Quantities shared by all Jacobian terms of one (track, base, target) triple.
template <typename Scalar>
struct PoTerms {
  std::size_t i, j, k;
  Vec3<Scalar> hj, hk;
  Mat3<Scalar> R_w_ci, R_w_ck;
  Mat3<Scalar> R_cj_w;
  Vec3<Scalar> t_jk, t_ji;
  Vec3<Scalar> rotated_pj;  // R_ji p_j
  Scalar scale;             // |[t_jk x] p_k|
  Scalar theta;             // |[p_k x] R_jk p_j|
  Row3<Scalar> dscale_dt;   // d scale / d t_jk

  PoTerms(std::span<const Vec2<Scalar>> obs, std::span<const CameraPose<Scalar>> poses, std::size_t target,
          const BasePair<Scalar>& base)
      : i(target), j(base.j), k(base.k) {
    hj = homogeneous(obs[j]);
    hk = homogeneous(obs[k]);
    R_w_ci = poses[i].R_w_c;
    R_w_ck = poses[k].R_w_c;
    R_cj_w = poses[j].R_w_c.transpose();
    const auto jk = relative_pose(poses[j], poses[k]);
    const auto ji = relative_pose(poses[j], poses[i]);
    t_jk = jk.t;
    t_ji = ji.t;
    rotated_pj = ji.R * hj;
    scale = t_jk.cross(hk).norm();
    theta = hk.cross(jk.R * hj).norm();
    dscale_dt = (hk.squaredNorm() * t_jk.transpose() - hk.dot(t_jk) * hk.transpose()) / scale;
  }

  Row3<Scalar> A1(std::size_t ii) const {
    if (ii == k) return -dscale_dt * geom::skew(t_jk) * R_w_ck;
    return Row3<Scalar>::Zero();
  }
  Mat3<Scalar> A(std::size_t ii) const { return rotated_pj * A1(ii); }

  Mat3<Scalar> B(std::size_t ii) const {
    if (i == j) return Mat3<Scalar>::Zero();
    const Mat3<Scalar> core = scale * R_w_ci * geom::skew(Vec3<Scalar>(R_cj_w * hj));
    if (ii == j) return core;
    if (ii == i) return -core;
    return Mat3<Scalar>::Zero();
  }

  Mat3<Scalar> C(std::size_t) const { return Mat3<Scalar>::Zero(); }

  /// The attitude dependence of theta that C = 0 leaves out:
  /// t_ji * d theta / d phi_ii, nonzero for ii in {j, k} unless i = j.
  Mat3<Scalar> C_exact(std::size_t ii) const {
    if (i == j || (ii != j && ii != k)) return Mat3<Scalar>::Zero();
    const Vec3<Scalar> pj_w = R_cj_w * hj;
    const Vec3<Scalar> u = hk.cross(Vec3<Scalar>(R_w_ck * pj_w));
    // d(R_jk p_j) / d phi_k = -R_w_ck [pj_w x]; the j case has opposite sign
    const Mat3<Scalar> d_rot = -R_w_ck * geom::skew(pj_w);
    const Row3<Scalar> dtheta = u.transpose() / theta * geom::skew(hk) * d_rot;
    return ii == k ? Mat3<Scalar>(t_ji * dtheta) : Mat3<Scalar>(-t_ji * dtheta);
  }

  Mat3<Scalar> D(std::size_t ii) const {
    if (i == j || ii != i) return Mat3<Scalar>::Zero();
    return -theta * geom::skew(t_ji) * R_w_ci;
  }

  Row3<Scalar> E1(std::size_t ii) const {
    if (ii == j) return dscale_dt * R_w_ck;
    if (ii == k) return -dscale_dt * R_w_ck;
    return Row3<Scalar>::Zero();
  }
  Mat3<Scalar> E(std::size_t ii) const { return rotated_pj * E1(ii); }

  Mat3<Scalar> F(std::size_t ii) const {
    if (i == j) return Mat3<Scalar>::Zero();
    if (ii == j) return theta * R_w_ci;
    if (ii == i) return -theta * R_w_ci;
    return Mat3<Scalar>::Zero();
  }

  Mat3<Scalar> dpo_dphi(std::size_t ii) const { return A(ii) + B(ii) + C(ii) + D(ii); }
  Mat3<Scalar> dpo_dpos(std::size_t ii) const { return E(ii) + F(ii); }
};

template <typename Scalar>
Mat3<Scalar> dpo_dphi(std::span<const Vec2<Scalar>> obs, std::span<const CameraPose<Scalar>> poses, std::size_t i,
                      const BasePair<Scalar>& base, std::size_t ii) {
  return PoTerms<Scalar>(obs, poses, i, base).dpo_dphi(ii);
}

template <typename Scalar>
Mat3<Scalar> dpo_dpos(std::span<const Vec2<Scalar>> obs, std::span<const CameraPose<Scalar>> poses, std::size_t i,
                      const BasePair<Scalar>& base, std::size_t ii) {
  return PoTerms<Scalar>(obs, poses, i, base).dpo_dpos(ii);
}

/// Sensitivity of the residual of view i to the normalized observations of
/// every view of the track, 2 x 2n with view v at columns [2v, 2v+2).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, Eigen::Dynamic> residual_noise_jacobian(std::span<const Vec2<Scalar>> obs,
                                                                 std::span<const CameraPose<Scalar>> poses,
                                                                 std::size_t i, const BasePair<Scalar>& base) {
  const std::size_t j = base.j, k = base.k;
  const Vec3<Scalar> hj = homogeneous(obs[j]);
  const Vec3<Scalar> hk = homogeneous(obs[k]);
  const auto jk = relative_pose(poses[j], poses[k]);
  const auto ji = relative_pose(poses[j], poses[i]);
  const Vec3<Scalar> a = ji.R * hj;
  const Vec3<Scalar> b = jk.R * hj;
  const Vec3<Scalar> u = hk.cross(b);
  const Vec3<Scalar> w = jk.t.cross(hk);
  const Scalar scale = w.norm();
  const Scalar th = u.norm();
  const Vec3<Scalar> p = scale * a + th * ji.t;

  const Row3<Scalar> dth_dhj = u.transpose() / th * geom::skew(hk) * jk.R;
  const Row3<Scalar> dth_dhk = -u.transpose() / th * geom::skew(b);
  const Row3<Scalar> dscale_dhk = w.transpose() / scale * geom::skew(jk.t);
  const Mat3<Scalar> dp_dhj = scale * ji.R + ji.t * dth_dhj;
  const Mat3<Scalar> dp_dhk = a * dscale_dhk + ji.t * dth_dhk;
  const Mat23<Scalar> proj = projection_jacobian(p);

  Eigen::Matrix<Scalar, 2, Eigen::Dynamic> J = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>::Zero(2, 2 * obs.size());
  J.template block<2, 2>(0, 2 * j) += (proj * dp_dhj).template leftCols<2>();
  J.template block<2, 2>(0, 2 * k) += (proj * dp_dhk).template leftCols<2>();
  J.template block<2, 2>(0, 2 * i) -= Eigen::Matrix<Scalar, 2, 2>::Identity();
  return J;
}

}  // namespace pomsckf::pose_only
