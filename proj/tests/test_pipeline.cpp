#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pomsckf/error.hpp"
#include "pomsckf/experiment.hpp"
#include "pomsckf/pipeline.hpp"
#include "pomsckf/sim.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace pomsckf;
using namespace pomsckf::pipeline;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoError;
}

std::vector<io::FrameStamp> stamps(const std::vector<sim::Frame>& frames) {
  std::vector<io::FrameStamp> out;
  for (const auto& f : frames) out.push_back({f.id, f.t});
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

sim::SimConfig short_noisy(std::uint64_t seed) {
  auto c = experiment::mems_config(seed, 12.0);
  return c;
}

}  // namespace

TEST_CASE("config parses keys, comments and relative paths") {
  const auto c = parse_config(
      "# comment\n"
      "imu_file = imu.csv\n"
      "tracks_file = /abs/tracks.csv\n"
      "groundtruth_file = gt.csv\n"
      "sigma_px = 1.5   # trailing\n"
      "focal = 400\n"
      "gravity = 0, 0, -9.8\n"
      "extrinsic_q_c_b = 1, 0, 0, 0\n"
      "max_clones = 8\n"
      "noise_mode = propagated\n"
      "exact_theta_attitude = true\n",
      "/data/run");
  CHECK(c.imu_file == fs::path("/data/run/imu.csv"));
  CHECK(c.tracks_file == fs::path("/abs/tracks.csv"));
  CHECK(c.filter.noise.sigma_px == 1.5);
  CHECK(c.filter.noise.focal == 400.0);
  CHECK(c.filter.world.gravity_w == geom::Vec3d(0, 0, -9.8));
  CHECK(c.filter.max_clones == 8);
  CHECK(c.filter.update.noise_mode == update::NoiseMode::Propagated);
  CHECK(c.filter.update.exact_theta_attitude);
}

TEST_CASE("config errors") {
  CHECK(code_of([] { parse_config("bogus = 1\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config("focal = 1\nfocal = 2\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config("focal = abc\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config("gravity = 1, 2\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config("noise_mode = fancy\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config("just words\n"); }) == ErrorCode::ConfigError);
  RunConfig rc;
  CHECK(code_of([&] { rc.validate(); }) == ErrorCode::ConfigError);
  rc.imu_file = "/nonexistent/imu.csv";
  rc.tracks_file = rc.imu_file;
  rc.groundtruth_file = rc.imu_file;
  CHECK(code_of([&] { rc.validate(); }) == ErrorCode::IoError);
  rc.filter.update.gate_confidence = 1.5;
  CHECK(code_of([&] { rc.validate(); }) == ErrorCode::ConfigError);
}

TEST_CASE("config text round trip") {
  RunConfig rc;
  rc.imu_file = "/x/imu.csv";
  rc.tracks_file = "/x/tracks.csv";
  rc.groundtruth_file = "/x/gt.csv";
  rc.output_dir = "/x/out";
  rc.filter.noise = {0.7, 460.0};
  rc.filter.imu_noise = {1e-4, 2e-3, 3e-6, 4e-5};
  rc.filter.ext.p_c_b = geom::Vec3d(0.1, 0.2, 0.3);
  rc.filter.max_clones = 9;
  rc.filter.update.exact_theta_attitude = true;
  rc.filter.init.ba = 0.03;
  const auto back = parse_config(to_config_text(rc));
  CHECK(to_config_text(back) == to_config_text(rc));
  CHECK(back.filter.imu_noise.sigma_wg == 3e-6);
  CHECK(back.filter.ext.p_c_b == rc.filter.ext.p_c_b);
  CHECK(back.filter.update.exact_theta_attitude);
}

TEST_CASE("no tracks reproduces dead reckoning") {
  const auto c = short_noisy(3);
  const auto out = sim::simulate(c);
  const auto init = sim::nav_from_truth(out.truth.front());
  const auto f = experiment::matched_options(c);
  const auto frames = stamps(out.frames);
  const auto res = run_filter(f, init, out.imu.samples, {}, frames);
  std::vector<double> times;
  for (const auto& fr : frames) times.push_back(fr.t);
  const auto dr = dead_reckon(init, out.imu.samples, times);
  REQUIRE(res.poses.size() == dr.size());
  for (std::size_t n = 0; n < dr.size(); ++n) {
    CHECK((res.poses[n].p - dr[n].p).norm() < 1e-12);
    CHECK(res.poses[n].q.angularDistance(dr[n].q) < 1e-12);
  }
  CHECK(res.updates.empty());
}

TEST_CASE("noisy run is deterministic and beats dead reckoning") {
  const auto c = short_noisy(4);
  const auto out = sim::simulate(c);
  const auto init = sim::nav_from_truth(out.truth.front());
  const auto f = experiment::matched_options(c);
  const auto a = run_filter(f, init, out.imu.samples, out.tracks, stamps(out.frames));
  const auto b = run_filter(f, init, out.imu.samples, out.tracks, stamps(out.frames));
  REQUIRE(a.poses.size() == b.poses.size());
  for (std::size_t n = 0; n < a.poses.size(); ++n) {
    CHECK(a.poses[n].p == b.poses[n].p);
    CHECK(a.poses[n].q.coeffs() == b.poses[n].q.coeffs());
  }
  CHECK_FALSE(a.updates.empty());
  CHECK_FALSE(a.aborted);
  const sim::Trajectory traj(c.trajectory);
  const double err = (a.poses.back().p - traj.evaluate(a.poses.back().t).p_w).norm();
  std::vector<double> times{a.poses.back().t};
  const double dr = (dead_reckon(init, out.imu.samples, times)[0].p - traj.evaluate(times[0]).p_w).norm();
  CHECK(err < dr);
  for (const auto& u : a.updates) CHECK(u.trace_after <= u.trace_before + 1e-12);
}

TEST_CASE("diagnostics carry reason codes") {
  auto c = short_noisy(5);
  const auto out = sim::simulate(c);
  auto f = experiment::matched_options(c);
  // corrupt a few observations so the gate has work to do
  auto tracks = out.tracks;
  for (std::size_t n = 0; n < tracks.size(); n += 25) tracks[n].observations.back().xy += geom::Vec2d(0.05, -0.05);
  const auto res = run_filter(f, sim::nav_from_truth(out.truth.front()), out.imu.samples, tracks, stamps(out.frames));
  const std::set<std::string> kinds{"track_rejected", "update_skipped", "frame_skipped", "numeric"};
  std::size_t gated = 0;
  for (const auto& e : res.events) {
    CHECK(kinds.count(e.kind) == 1);
    CHECK_FALSE(e.reason.empty());
    gated += e.reason == "gate_rejected";
  }
  CHECK(gated > 0);

  const auto dir = fs::temp_directory_path() / ("pomsckf_pipe_" + std::to_string(::getpid()));
  write_diagnostics_csv(dir / "diagnostics.csv", res.events);
  write_updates_csv(dir / "updates.csv", res.updates);
  const auto text = slurp(dir / "diagnostics.csv");
  CHECK(text.rfind("timestamp_s,kind,feature_id,reason,value", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == std::ptrdiff_t(res.events.size() + 1));
  fs::remove_all(dir);
}

TEST_CASE("frames outside the IMU span are skipped") {
  const auto c = short_noisy(6);
  const auto out = sim::simulate(c);
  auto frames = stamps(out.frames);
  frames.push_back({999999, out.imu.samples.back().t + 5.0});
  const auto res = run_filter(experiment::matched_options(c), sim::nav_from_truth(out.truth.front()),
                              out.imu.samples, out.tracks, frames);
  CHECK(res.poses.size() == out.frames.size());
  bool seen = false;
  for (const auto& e : res.events) seen = seen || (e.kind == "frame_skipped");
  CHECK(seen);
}

TEST_CASE("ground-truth initialization interpolates") {
  std::vector<io::GroundTruthSample> gt{{0.0, geom::Vec3d(0, 0, 0), geom::Quatd::Identity(), std::nullopt},
                                        {1.0, geom::Vec3d(2, 0, 0), geom::Quatd::Identity(), std::nullopt},
                                        {2.0, geom::Vec3d(4, 2, 0), geom::Quatd::Identity(), std::nullopt}};
  const auto s = nav_from_groundtruth(gt, 0.5);
  CHECK((s.p_w - geom::Vec3d(1, 0, 0)).norm() < 1e-15);
  CHECK((s.v_w - geom::Vec3d(2, 0, 0)).norm() < 1e-12);
  CHECK(s.b_g == geom::Vec3d::Zero());
  gt[0].v = geom::Vec3d(7, 7, 7);
  gt[1].v = geom::Vec3d(7, 7, 7);
  CHECK((nav_from_groundtruth(gt, 0.5).v_w - geom::Vec3d(7, 7, 7)).norm() < 1e-12);
}

TEST_CASE("initial state covariance") {
  InitSigmas s;
  const auto st = initial_state(imu::NavState{}, 2.0, s);
  CHECK(st.t == 2.0);
  CHECK(st.P.rows() == 15);
  CHECK(st.P(0, 0) == s.att * s.att);
  CHECK(st.P(14, 14) == s.ba * s.ba);
  CHECK(st.clones.empty());
}
