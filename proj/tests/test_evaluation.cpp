#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pomsckf/error.hpp"
#include "pomsckf/evaluation.hpp"

#include <random>

using namespace pomsckf;
using namespace pomsckf::eval;
using geom::Quatd;
using geom::Vec3d;

namespace {

io::TrajectoryEstimate line3() {
  return {{0.0, Vec3d(0, 0, 0), Quatd::Identity()},
          {1.0, Vec3d(1, 0, 0), Quatd::Identity()},
          {2.0, Vec3d(2, 0, 0), Quatd::Identity()}};
}

io::TrajectoryEstimate random_path(std::uint64_t seed, int n = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  io::TrajectoryEstimate out;
  for (int k = 0; k < n; ++k) out.push_back({0.05 * k, Vec3d(u(rng), u(rng), u(rng)), Quatd::UnitRandom()});
  return out;
}

}  // namespace

TEST_CASE("ate_rmse hand values") {
  const auto gt = line3();
  CHECK(ate_rmse(gt, gt) == 0.0);
  auto off = gt;
  for (auto& p : off) p.p += Vec3d(0, 1, 0);
  CHECK(ate_rmse(off, gt) == 1.0);
  auto mixed = gt;
  mixed[2].p.z() += 2.0;
  CHECK(ate_rmse(mixed, gt) == std::sqrt(4.0 / 3.0));
  CHECK(ate_rmse(mixed, gt) == doctest::Approx(1.1547).epsilon(1e-4));
}

TEST_CASE("association uses the nearest stamp within the window") {
  const auto gt = line3();
  io::TrajectoryEstimate est{{0.004, Vec3d(0, 0, 0), Quatd::Identity()},
                             {1.2, Vec3d(9, 9, 9), Quatd::Identity()},
                             {1.996, Vec3d(2, 0, 0), Quatd::Identity()}};
  const auto pairs = associate(est, gt, 0.01);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(pairs[1] == std::pair<std::size_t, std::size_t>{2, 2});
  CHECK(ate_rmse(est, gt, 0.01) == 0.0);
}

TEST_CASE("alignment of identical trajectories is the identity") {
  const auto x = random_path(1);
  const auto a = align_umeyama(x, x);
  CHECK((a.R - geom::Mat3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.t.norm() < 1e-12);
  CHECK(ate_rmse(eval::apply(a, x), x) < 1e-12);
}

TEST_CASE("alignment recovers a pure translation") {
  const auto gt = random_path(2);
  auto est = gt;
  for (auto& p : est) p.p += Vec3d(1, 2, 3);
  const auto a = align_umeyama(est, gt);
  CHECK((a.t - Vec3d(-1, -2, -3)).norm() < 1e-9);
  CHECK(ate_rmse(eval::apply(a, est), gt) < 1e-9);
}

TEST_CASE("alignment recovers a 10 degree yaw") {
  const auto gt = random_path(3);
  const double yaw = 10.0 * M_PI / 180.0;
  const Quatd q(Eigen::AngleAxisd(yaw, Vec3d::UnitZ()));
  auto est = gt;
  for (auto& p : est) {
    p.p = q * p.p;
    p.q = q * p.q;
  }
  const auto a = align_umeyama(est, gt);
  const double angle = Eigen::AngleAxisd(a.R * q.toRotationMatrix()).angle();
  CHECK(angle < 1e-9);
  const auto aligned = eval::apply(a, est);
  CHECK(aligned[5].q.angularDistance(gt[5].q) < 1e-9);
}

TEST_CASE("alignment needs three pairs") {
  const auto gt = line3();
  io::TrajectoryEstimate two(gt.begin(), gt.begin() + 2);
  try {
    align_umeyama(two, gt);
    FAIL("expected AlignmentUnderdetermined");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AlignmentUnderdetermined);
  }
}

TEST_CASE("ground truth converts to a trajectory") {
  std::vector<io::GroundTruthSample> gt{{0.5, Vec3d(1, 2, 3), Quatd::Identity(), std::nullopt}};
  const auto t = to_trajectory(gt);
  REQUIRE(t.size() == 1);
  CHECK(t[0].t == 0.5);
  CHECK(t[0].p == Vec3d(1, 2, 3));
}
