#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pomsckf/geom.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <random>

using namespace pomsckf::geom;

namespace {

Vec3d random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

Quatd random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return canonical(Quatd(n(rng), n(rng), n(rng), n(rng)));
}

}  // namespace

TEST_CASE("skew of (1,2,3)") {
  Mat3d expect;
  expect << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  CHECK(skew(Vec3d(1, 2, 3)) == expect);
  CHECK(skew(Vec3d::Zero().eval()) == Mat3d::Zero());
}

TEST_CASE("skew matches the cross product and is antisymmetric") {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 200; ++n) {
    const Vec3d v = random_vec(rng), u = random_vec(rng);
    const Vec3d a = skew(v) * u;
    const Vec3d b(v.y() * u.z() - v.z() * u.y(), v.z() * u.x() - v.x() * u.z(), v.x() * u.y() - v.y() * u.x());
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((skew(v) + skew(v).transpose()) == Mat3d::Zero());
  }
}

TEST_CASE("quat_to_rot canonical values") {
  CHECK(quat_to_rot(Quatd::Identity()) == Mat3d::Identity());
  const double h = std::sqrt(0.5);
  Mat3d rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((quat_to_rot(Quatd(h, 0, 0, h)) - rz).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("quat_to_rot agrees with the quaternion sandwich") {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 200; ++n) {
    const Quatd q = random_quat(rng);
    const Vec3d v = random_vec(rng);
    // q (0, v) q*, written out with Hamilton products
    const Quatd pv(0.0, v.x(), v.y(), v.z());
    const Quatd s = q * pv * q.conjugate();
    const Mat3d R = quat_to_rot(q);
    CHECK((R * v - s.vec()).norm() < 1e-13);
    CHECK((R * R.transpose() - Mat3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(R.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("quat_to_rot flags off-unit input") {
  bool flagged = false;
  const Mat3d R = quat_to_rot(Quatd(2.0, 0, 0, 0), &flagged);
  CHECK(flagged);
  CHECK(R == Mat3d::Identity());
  quat_to_rot(Quatd::Identity(), &flagged);
  CHECK_FALSE(flagged);
}

TEST_CASE("apply_small_angle examples") {
  std::mt19937_64 rng(3);
  const Quatd q = random_quat(rng);
  CHECK(apply_small_angle(q, Vec3d::Zero().eval()).coeffs().isApprox(q.coeffs(), 1e-15));
  const Quatd d = apply_small_angle(Quatd::Identity(), Vec3d(1e-6, 0, 0));
  CHECK(d.x() == doctest::Approx(5e-7).epsilon(1e-9));
  CHECK(d.w() == doctest::Approx(1.0));
  CHECK(d.w() >= 0.0);
  CHECK(std::abs(d.norm() - 1.0) < 1e-12);
}

TEST_CASE("apply_small_angle matches the matrix exponential") {
  std::mt19937_64 rng(4);
  for (int n = 0; n < 200; ++n) {
    const Quatd q = random_quat(rng);
    const Vec3d phi = random_vec(rng, 0.3);
    const Mat3d K = skew(phi);
    const Mat3d oracle = K.exp() * quat_to_rot(q);
    CHECK((quat_to_rot(apply_small_angle(q, phi)) - oracle).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("apply_small_angle first-order consistency") {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 200; ++n) {
    const Quatd q = random_quat(rng);
    const Vec3d phi = random_vec(rng, 1.0).normalized() * 1e-3 * std::uniform_real_distribution<>(0, 1)(rng);
    const Mat3d first = (Mat3d::Identity() + skew(phi)) * quat_to_rot(q);
    CHECK((quat_to_rot(apply_small_angle(q, phi)) - first).cwiseAbs().maxCoeff() <= phi.squaredNorm() + 1e-15);
  }
}

TEST_CASE("so3 exp and log round trip, canonical sign") {
  std::mt19937_64 rng(6);
  for (int n = 0; n < 200; ++n) {
    const Vec3d phi = random_vec(rng, 1.0);
    if (phi.norm() > 3.0) continue;
    CHECK((so3_log(so3_exp(phi)) - phi).norm() < 1e-12);
    CHECK((quat_to_rot(quat_exp(phi)) - so3_exp(phi)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(quat_exp(phi).w() >= 0.0);
  }
  CHECK(canonical(Quatd(-1, 0, 0, 0)).w() == 1.0);
}
