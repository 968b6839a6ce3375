#pragma once

// Strapdown mechanization and error-state propagation of the IMU block.
//
// Error-state layout (15): [phi, dv, dp, db_g, db_a].
//   phi : q_true = dq(phi) * q_est (world frame)
//   dv, dp : est - true
//   db_g, db_a : true - est
// These signs are the ones under which the continuous transition matrix
// below reproduces the linearized mechanization exactly.

#include "pomsckf/geom.hpp"

#include <Eigen/Core>

namespace pomsckf::imu {

using geom::Mat3d;
using geom::Quatd;
using geom::Vec3d;

using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat15x12 = Eigen::Matrix<double, 15, 12>;
using Vec15 = Eigen::Matrix<double, 15, 1>;

constexpr int kImuDim = 15;

namespace idx {
constexpr int att = 0;
constexpr int vel = 3;
constexpr int pos = 6;
constexpr int bg = 9;
constexpr int ba = 12;
}  // namespace idx

struct ImuSample {
  double t = 0.0;
  Vec3d omega = Vec3d::Zero();  // rad/s
  Vec3d f = Vec3d::Zero();      // m/s^2, specific force
};

struct NavState {
  Quatd q_b_w = Quatd::Identity();
  Vec3d v_w = Vec3d::Zero();
  Vec3d p_w = Vec3d::Zero();
  Vec3d b_g = Vec3d::Zero();
  Vec3d b_a = Vec3d::Zero();

  Mat3d R_b_w() const { return geom::quat_to_rot(q_b_w); }
};

/// Continuous-time noise densities.
struct ImuNoiseSpec {
  double sigma_g = 0.0;   // rad/s/sqrt(Hz)
  double sigma_a = 0.0;   // m/s^2/sqrt(Hz)
  double sigma_wg = 0.0;  // rad/s^2/sqrt(Hz)
  double sigma_wa = 0.0;  // m/s^3/sqrt(Hz)
};

struct WorldModel {
  Vec3d gravity_w{0.0, 0.0, -9.81};
  Vec3d earth_rate_w = Vec3d::Zero();
};

/// Linear interpolation of a sample at time t in [a.t, b.t].
ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t);

/// Midpoint integration over [u0.t, u1.t]; quaternion is renormalized.
/// Throws TimestampOrder if u1.t <= u0.t.
NavState propagate_nominal(const NavState& s, const ImuSample& u0, const ImuSample& u1, const WorldModel& world = {});

Mat15 error_transition(const NavState& s, const ImuSample& u, const WorldModel& world = {});

Mat15x12 noise_jacobian(const NavState& s);

/// Diagonal continuous noise intensity ordered [w_g, w_a, w_wg, w_wa].
Eigen::Matrix<double, 12, 12> continuous_noise(const ImuNoiseSpec& noise);

struct Discretized {
  Mat15 Phi;
  Mat15 Qd;
};

/// Van Loan discretization of (F, G Qc G^T) over dt.
Discretized discretize(const Mat15& F, const Mat15x12& G, const ImuNoiseSpec& noise, double dt);

/// P_bb <- Phi P_bb Phi^T + Qd, P_bc <- Phi P_bc, clone block untouched.
/// Throws CovarianceCorrupt if P has an eigenvalue below -1e-9.
Eigen::MatrixXd propagate_covariance(const Eigen::MatrixXd& P, const Mat15& Phi, const Mat15& Qd);

/// In-place variant used by the filter loop.
void propagate_covariance_inplace(Eigen::MatrixXd& P, const Mat15& Phi, const Mat15& Qd);

/// Throws CovarianceCorrupt unless min eig(P) >= -tol (checked through a
/// Cholesky factorization of P + tol*I).
void require_psd(const Eigen::MatrixXd& P, double tol = 1e-9);

/// Error of `est` relative to `truth` under the sign conventions above.
Vec15 error_between(const NavState& est, const NavState& truth);

/// The state whose error relative to it is `dx`, i.e. est corrected by dx.
NavState correct(const NavState& est, const Vec15& dx);

}  // namespace pomsckf::imu
