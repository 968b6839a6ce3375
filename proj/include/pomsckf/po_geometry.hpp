#pragma once

// Pose-only multi-view geometry.
//
// A feature seen in views 0..n-1 is described only by the camera poses and
// its normalized observations. Two base views (j, k) fix the scale, after
// which the camera-frame point of any view i is predicted without a 3D
// landmark:
//
//   p_po(i) = |[t_jk x] p_k| R_ji p_j + |[p_k x] R_jk p_j| t_ji
//
// which equals theta_jk * p_f^{c_i} on exact data.

#include "pomsckf/error.hpp"
#include "pomsckf/geom.hpp"

#include <cstddef>
#include <span>
#include <string>

namespace pomsckf::pose_only {

using geom::Mat3;
using geom::Vec2;
using geom::Vec3;

template <typename Scalar>
struct CameraPose {
  Mat3<Scalar> R_w_c = Mat3<Scalar>::Identity();  // world -> camera
  Vec3<Scalar> t_c_w = Vec3<Scalar>::Zero();      // camera position in world
};

template <typename Scalar>
struct RelativePose {
  Mat3<Scalar> R;  // R_a^b
  Vec3<Scalar> t;  // t_a^b
};

template <typename Scalar>
struct BasePair {
  std::size_t j = 0;  // left base view
  std::size_t k = 1;  // right base view
  Scalar theta = Scalar(0);
};

struct GeometryOptions {
  double theta_min = 1e-4;
  double depth_eps = 1e-8;
};

template <typename Derived>
Vec3<typename Derived::Scalar> homogeneous(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  return Vec3<Scalar>(p(0), p(1), Scalar(1));
}

/// Relative motion taking points from camera a to camera b.
template <typename Scalar>
RelativePose<Scalar> relative_pose(const CameraPose<Scalar>& a, const CameraPose<Scalar>& b) {
  return {b.R_w_c * a.R_w_c.transpose(), b.R_w_c * (a.t_c_w - b.t_c_w)};
}

/// Parallax scalar theta_(i,j) = |[p_j x] R_i^j p_i|.
template <typename Scalar>
Scalar theta(const Vec2<Scalar>& p_i, const Vec2<Scalar>& p_j, const Mat3<Scalar>& R_i_j) {
  return homogeneous(p_j).cross(R_i_j * homogeneous(p_i)).norm();
}

template <typename Scalar>
struct DepthPair {
  Scalar d_i;
  Scalar d_j;
};

/// Depths of a feature in views i and j from the relative pose alone.
template <typename Scalar>
DepthPair<Scalar> ppo_depths(const Vec2<Scalar>& p_i, const Vec2<Scalar>& p_j, const Mat3<Scalar>& R_i_j,
                             const Vec3<Scalar>& t_i_j, const GeometryOptions& opt = {}) {
  const Vec3<Scalar> hi = homogeneous(p_i);
  const Vec3<Scalar> hj = homogeneous(p_j);
  const Vec3<Scalar> rotated = R_i_j * hi;
  const Scalar th = hj.cross(rotated).norm();
  if (!(th > Scalar(opt.theta_min))) {
    throw Error(ErrorCode::DegenerateParallax, "pair parallax " + std::to_string(double(th)));
  }
  return {hj.cross(t_i_j).norm() / th, rotated.cross(t_i_j).norm() / th};
}

/// Exhaustive argmax of theta over view pairs (jj < kk). Ties keep the
/// lexicographically smallest pair.
template <typename Scalar>
BasePair<Scalar> select_base_views(std::span<const Vec2<Scalar>> obs, std::span<const CameraPose<Scalar>> poses,
                                   const GeometryOptions& opt = {}) {
  if (obs.size() < 2 || obs.size() != poses.size()) {
    throw Error(ErrorCode::DegenerateParallax, "track needs >= 2 observations with poses");
  }
  BasePair<Scalar> best{0, 1, Scalar(-1)};
  for (std::size_t jj = 0; jj + 1 < obs.size(); ++jj) {
    for (std::size_t kk = jj + 1; kk < obs.size(); ++kk) {
      const Mat3<Scalar> R_jk = poses[kk].R_w_c * poses[jj].R_w_c.transpose();
      const Scalar th = theta(obs[jj], obs[kk], R_jk);
      if (th > best.theta) best = {jj, kk, th};
    }
  }
  if (!(best.theta > Scalar(opt.theta_min))) {
    throw Error(ErrorCode::DegenerateParallax, "max track parallax " + std::to_string(double(best.theta)));
  }
  return best;
}

/// Scaled camera-frame prediction of the feature in view i.
template <typename Scalar>
Vec3<Scalar> po_point(std::span<const Vec2<Scalar>> obs, std::span<const CameraPose<Scalar>> poses, std::size_t i,
                      const BasePair<Scalar>& base, const GeometryOptions& opt = {}) {
  const auto& cj = poses[base.j];
  const auto& ck = poses[base.k];
  const auto& ci = poses[i];
  const Vec3<Scalar> hj = homogeneous(obs[base.j]);
  const Vec3<Scalar> hk = homogeneous(obs[base.k]);
  const auto jk = relative_pose(cj, ck);
  const auto ji = relative_pose(cj, ci);
  const Scalar scale = jk.t.cross(hk).norm();
  const Scalar th = hk.cross(jk.R * hj).norm();
  // view j is its own reference (R = I, t = 0); skipping the round trip
  // through R_w_c keeps its residual exactly zero
  const Vec3<Scalar> p = i == base.j ? Vec3<Scalar>(scale * hj) : Vec3<Scalar>(scale * (ji.R * hj) + th * ji.t);
  if (!(p(2) > Scalar(opt.depth_eps))) {
    throw Error(ErrorCode::NonPositiveDepth, "predicted depth " + std::to_string(double(p(2))));
  }
  return p;
}

/// Normalized reprojection error: predicted minus observed.
template <typename Scalar>
Vec2<Scalar> po_residual(const Vec2<Scalar>& observed, const Vec3<Scalar>& p_po) {
  // (p_xy - z * obs) / z rather than p_xy / z - obs: equal in exact
  // arithmetic, and exactly zero in floating point when p_po = z * (obs, 1)
  return (p_po.template head<2>() - observed * p_po(2)) / p_po(2);
}

}  // namespace pomsckf::pose_only
