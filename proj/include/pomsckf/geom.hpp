#pragma once

// Rotation and quaternion helpers shared by the filter.
//
// Conventions: Hamilton quaternions, scalar-first, q_b_w maps body-frame
// vectors into the world frame. Attitude errors are left (world-frame)
// perturbations: q_true = dq(phi) * q_est.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace pomsckf::geom {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Quat = Eigen::Quaternion<Scalar>;

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;
using Quatd = Quat<double>;

/// Cross-product matrix: skew(v) * u == v.cross(u).
template <typename Derived>
Mat3<typename Derived::Scalar> skew(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Mat3<Scalar> m;
  m << Scalar(0), -v(2), v(1),
       v(2), Scalar(0), -v(0),
       -v(1), v(0), Scalar(0);
  return m;
}

/// Unit norm, w >= 0.
template <typename Scalar>
Quat<Scalar> canonical(Quat<Scalar> q) {
  q.normalize();
  if (q.w() < Scalar(0)) q.coeffs() = -q.coeffs();
  return q;
}

/// Rotation matrix of q. Inputs whose norm is off by more than 1e-6 are
/// normalized first and reported through `renormalized`.
template <typename Scalar>
Mat3<Scalar> quat_to_rot(const Quat<Scalar>& q, bool* renormalized = nullptr) {
  using std::abs;
  const bool off_unit = abs(q.norm() - Scalar(1)) > Scalar(1e-6);
  if (renormalized) *renormalized = off_unit;
  const Quat<Scalar> u = q.normalized();
  const Scalar w = u.w(), x = u.x(), y = u.y(), z = u.z();
  Mat3<Scalar> R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

/// Quaternion of the rotation vector phi (exact exponential map).
template <typename Derived>
Quat<typename Derived::Scalar> quat_exp(const Eigen::MatrixBase<Derived>& phi) {
  using Scalar = typename Derived::Scalar;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar angle = phi.norm();
  const Scalar half = angle / Scalar(2);
  // sin(x/2)/x, series below 1e-4 rad keeps full precision
  const Scalar k = angle < Scalar(1e-4) ? Scalar(0.5) - angle * angle / Scalar(48) : sin(half) / angle;
  Quat<Scalar> q(cos(half), k * phi(0), k * phi(1), k * phi(2));
  return canonical(q);
}

/// Rodrigues' formula.
template <typename Derived>
Mat3<typename Derived::Scalar> so3_exp(const Eigen::MatrixBase<Derived>& phi) {
  using Scalar = typename Derived::Scalar;
  using std::cos;
  using std::sin;
  const Scalar angle = phi.norm();
  const Mat3<Scalar> K = skew(phi);
  Scalar a, b;
  if (angle < Scalar(1e-5)) {
    a = Scalar(1) - angle * angle / Scalar(6);
    b = Scalar(0.5) - angle * angle / Scalar(24);
  } else {
    a = sin(angle) / angle;
    b = (Scalar(1) - cos(angle)) / (angle * angle);
  }
  return Mat3<Scalar>::Identity() + a * K + b * K * K;
}

/// Rotation vector of R, |result| <= pi.
template <typename Scalar>
Vec3<Scalar> so3_log(const Mat3<Scalar>& R) {
  const Eigen::AngleAxis<Scalar> aa(R);
  return aa.angle() * aa.axis();
}

/// q_true = dq(phi) * q, i.e. a left (world-frame) perturbation.
template <typename Derived>
Quat<typename Derived::Scalar> apply_small_angle(const Quat<typename Derived::Scalar>& q,
                                                 const Eigen::MatrixBase<Derived>& phi) {
  return canonical(quat_exp(phi) * q);
}

/// phi such that R_true = Exp(phi) * R_est.
template <typename Scalar>
Vec3<Scalar> attitude_error(const Mat3<Scalar>& R_true, const Mat3<Scalar>& R_est) {
  return so3_log(Mat3<Scalar>(R_true * R_est.transpose()));
}

template <typename Scalar>
Quat<Scalar> rot_to_quat(const Mat3<Scalar>& R) {
  return canonical(Quat<Scalar>(R));
}

}  // namespace pomsckf::geom
