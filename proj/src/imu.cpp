#include "pomsckf/imu.hpp"

#include "pomsckf/error.hpp"

#include <Eigen/Cholesky>
#include <unsupported/Eigen/MatrixFunctions>

#include <string>

namespace pomsckf::imu {

using geom::skew;

ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t) {
  const double span = b.t - a.t;
  const double w = span > 0.0 ? (t - a.t) / span : 0.0;
  return {t, (1.0 - w) * a.omega + w * b.omega, (1.0 - w) * a.f + w * b.f};
}

NavState propagate_nominal(const NavState& s, const ImuSample& u0, const ImuSample& u1, const WorldModel& world) {
  const double dt = u1.t - u0.t;
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::TimestampOrder,
                "imu samples " + std::to_string(u0.t) + " -> " + std::to_string(u1.t) + " not increasing");
  }
  const Vec3d w_mid = 0.5 * (u0.omega + u1.omega) - s.b_g;

  NavState out = s;
  // body rate acts on the right, earth rotation of the world frame on the left
  out.q_b_w = geom::canonical(geom::quat_exp(Vec3d(-world.earth_rate_w * dt)) * s.q_b_w * geom::quat_exp(Vec3d(w_mid * dt)));

  const Mat3d R0 = s.R_b_w();
  const Mat3d R1 = out.R_b_w();
  const Vec3d a_mid = 0.5 * (R0 * (u0.f - s.b_a) + R1 * (u1.f - s.b_a));
  const Vec3d acc = a_mid + world.gravity_w - 2.0 * world.earth_rate_w.cross(s.v_w);
  out.v_w = s.v_w + acc * dt;
  out.p_w = s.p_w + 0.5 * (s.v_w + out.v_w) * dt;
  return out;
}

Mat15 error_transition(const NavState& s, const ImuSample& u, const WorldModel& world) {
  const Mat3d R = s.R_b_w();
  const Mat3d W = skew(world.earth_rate_w);
  Mat15 F = Mat15::Zero();
  F.block<3, 3>(idx::att, idx::att) = -W;
  F.block<3, 3>(idx::att, idx::bg) = -R;
  F.block<3, 3>(idx::vel, idx::att) = skew(Vec3d(R * (u.f - s.b_a)));
  F.block<3, 3>(idx::vel, idx::vel) = -2.0 * W;
  F.block<3, 3>(idx::vel, idx::ba) = R;
  F.block<3, 3>(idx::pos, idx::vel).setIdentity();
  return F;
}

Mat15x12 noise_jacobian(const NavState& s) {
  const Mat3d R = s.R_b_w();
  Mat15x12 G = Mat15x12::Zero();
  G.block<3, 3>(idx::att, 0) = -R;
  G.block<3, 3>(idx::vel, 3) = R;
  G.block<3, 3>(idx::bg, 6).setIdentity();
  G.block<3, 3>(idx::ba, 9).setIdentity();
  return G;
}

Eigen::Matrix<double, 12, 12> continuous_noise(const ImuNoiseSpec& noise) {
  Eigen::Matrix<double, 12, 1> d;
  d << Vec3d::Constant(noise.sigma_g * noise.sigma_g), Vec3d::Constant(noise.sigma_a * noise.sigma_a),
      Vec3d::Constant(noise.sigma_wg * noise.sigma_wg), Vec3d::Constant(noise.sigma_wa * noise.sigma_wa);
  return d.asDiagonal();
}

Discretized discretize(const Mat15& F, const Mat15x12& G, const ImuNoiseSpec& noise, double dt) {
  using Mat30 = Eigen::Matrix<double, 30, 30>;
  Mat30 M = Mat30::Zero();
  M.block<15, 15>(0, 0) = -F * dt;
  M.block<15, 15>(0, 15) = G * continuous_noise(noise) * G.transpose() * dt;
  M.block<15, 15>(15, 15) = F.transpose() * dt;
  const Mat30 E = M.exp();

  Discretized out;
  out.Phi = E.block<15, 15>(15, 15).transpose();
  const Mat15 Q = out.Phi * E.block<15, 15>(0, 15);
  out.Qd = 0.5 * (Q + Q.transpose());
  return out;
}

void require_psd(const Eigen::MatrixXd& P, double tol) {
  Eigen::MatrixXd shifted = P;
  shifted.diagonal().array() += tol;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success || !P.allFinite()) {
    throw Error(ErrorCode::CovarianceCorrupt, "covariance is not positive semi-definite");
  }
}

void propagate_covariance_inplace(Eigen::MatrixXd& P, const Mat15& Phi, const Mat15& Qd) {
  require_psd(P);
  const Eigen::Index n = P.rows();
  const Eigen::Index nc = n - kImuDim;
  const Mat15 Pbb = P.topLeftCorner<15, 15>();
  P.topLeftCorner<15, 15>() = Phi * Pbb * Phi.transpose() + Qd;
  if (nc > 0) {
    const Eigen::MatrixXd Pbc = Phi * P.topRightCorner(kImuDim, nc);
    P.topRightCorner(kImuDim, nc) = Pbc;
    P.bottomLeftCorner(nc, kImuDim) = Pbc.transpose();
  }
  const Mat15 sym = 0.5 * (P.topLeftCorner<15, 15>() + P.topLeftCorner<15, 15>().transpose());
  P.topLeftCorner<15, 15>() = sym;
}

Eigen::MatrixXd propagate_covariance(const Eigen::MatrixXd& P, const Mat15& Phi, const Mat15& Qd) {
  Eigen::MatrixXd out = P;
  propagate_covariance_inplace(out, Phi, Qd);
  return out;
}

Vec15 error_between(const NavState& est, const NavState& truth) {
  Vec15 dx;
  dx.segment<3>(idx::att) = geom::attitude_error(truth.R_b_w(), est.R_b_w());
  dx.segment<3>(idx::vel) = est.v_w - truth.v_w;
  dx.segment<3>(idx::pos) = est.p_w - truth.p_w;
  dx.segment<3>(idx::bg) = truth.b_g - est.b_g;
  dx.segment<3>(idx::ba) = truth.b_a - est.b_a;
  return dx;
}

NavState correct(const NavState& est, const Vec15& dx) {
  NavState out;
  out.q_b_w = geom::apply_small_angle(est.q_b_w, Vec3d(dx.segment<3>(idx::att)));
  out.v_w = est.v_w - dx.segment<3>(idx::vel);
  out.p_w = est.p_w - dx.segment<3>(idx::pos);
  out.b_g = est.b_g + dx.segment<3>(idx::bg);
  out.b_a = est.b_a + dx.segment<3>(idx::ba);
  return out;
}

}  // namespace pomsckf::imu
