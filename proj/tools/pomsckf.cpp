// Command-line front end: sim, run, eval, audit-jacobians, sweep-depth.

#include "pomsckf/audit.hpp"
#include "pomsckf/error.hpp"
#include "pomsckf/evaluation.hpp"
#include "pomsckf/experiment.hpp"
#include "pomsckf/io.hpp"
#include "pomsckf/pipeline.hpp"
#include "pomsckf/sim.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace pomsckf;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumerical = 3;

io::TrajectoryEstimate load_any_trajectory(const fs::path& path) {
  if (path.extension() == ".csv") return eval::to_trajectory(io::load_groundtruth_csv(path));
  return io::load_tum(path);
}

struct SimArgs {
  std::string kind = "circle";
  double duration = 60.0;
  double extent = 20.0;
  double speed = 3.0;
  double imu_rate = 200.0;
  double cam_rate = 20.0;
  std::uint64_t seed = 1;
  std::string noise = "mems";
  double depth_min = 4.0;
  double depth_max = 12.0;
  std::string out = "sim_out";
};

int cmd_sim(const SimArgs& a) {
  sim::SimConfig c = experiment::mems_config(a.seed, a.duration);
  c.trajectory.kind = sim::parse_kind(a.kind);
  c.trajectory.extent = a.extent;
  c.trajectory.speed = a.speed;
  c.trajectory.imu_rate = a.imu_rate;
  c.trajectory.cam_rate = a.cam_rate;
  c.points.z_min = a.depth_min;
  c.points.z_max = a.depth_max;
  if (a.noise == "none") {
    c.imu_noise = {};
    c.bias = {};
    c.pixel_noise.sigma_px = 0.0;
  } else if (a.noise != "mems") {
    throw CLI::ValidationError("--noise", "must be 'mems' or 'none'");
  }
  const auto out = sim::simulate(c);
  const fs::path dir(a.out);
  fs::create_directories(dir);

  io::write_imu_csv(dir / "imu.csv", out.imu.samples);
  io::write_tracks_csv(dir / "tracks.csv", out.tracks);
  std::vector<io::GroundTruthSample> gt;
  io::TrajectoryEstimate gt_tum;
  for (const auto& s : out.truth) {
    gt.push_back({s.t, s.p_w, s.q_b_w, s.v_w});
    gt_tum.push_back({s.t, s.p_w, s.q_b_w});
  }
  io::write_groundtruth_csv(dir / "groundtruth.csv", gt);
  io::write_tum(dir / "groundtruth.tum", gt_tum);

  pipeline::RunConfig rc;
  rc.imu_file = "imu.csv";
  rc.tracks_file = "tracks.csv";
  rc.groundtruth_file = "groundtruth.csv";
  rc.output_dir = "run";
  rc.filter = experiment::matched_options(c);
  std::ofstream(dir / "config.txt") << "# generated by pomsckf sim (" << a.kind << ", seed " << a.seed << ")\n"
                                    << pipeline::to_config_text(rc);
  std::cout << "wrote " << out.imu.samples.size() << " IMU samples, " << out.tracks.size() << " tracks, "
            << out.frames.size() << " frames to " << dir.string() << "\n";
  return kOk;
}

int cmd_run(const std::string& config_path) {
  const pipeline::RunConfig rc = pipeline::load_config(config_path);
  rc.validate();
  const auto imu = io::load_imu_csv(rc.imu_file);
  const auto tracks = io::load_tracks_csv(rc.tracks_file);
  const auto gt = io::load_groundtruth_csv(rc.groundtruth_file);
  const auto init = pipeline::nav_from_groundtruth(gt, imu.front().t);

  auto frames = tracks.frames;
  if (frames.empty()) {
    // no camera frames: report the dead-reckoned pose at every IMU sample
    for (std::size_t n = 0; n < imu.size(); ++n) frames.push_back({static_cast<std::int64_t>(n), imu[n].t});
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = pipeline::run_filter(rc.filter, init, imu, tracks.tracks, frames);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(rc.output_dir);
  io::write_tum(rc.output_dir / "trajectory.tum", result.poses, {"timestamp_s tx ty tz qx qy qz qw"});
  pipeline::write_diagnostics_csv(rc.output_dir / "diagnostics.csv", result.events);
  pipeline::write_updates_csv(rc.output_dir / "updates.csv", result.updates);
  std::cout << "poses " << result.poses.size() << ", updates " << result.updates.size() << ", events "
            << result.events.size() << ", " << secs << " s\n";
  if (result.aborted) {
    pipeline::write_state_dump(rc.output_dir / "last_valid_state.txt", result.last_valid);
    std::cerr << "aborted: " << result.abort_message << " (last valid state in "
              << (rc.output_dir / "last_valid_state.txt").string() << ")\n";
    return kNumerical;
  }
  return kOk;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, double max_dt, bool align) {
  const auto est = load_any_trajectory(est_path);
  const auto gt = load_any_trajectory(gt_path);
  io::TrajectoryEstimate aligned = est;
  if (align) {
    const auto a = eval::align_umeyama(est, gt, max_dt);
    aligned = eval::apply(a, est);
    std::cout << "alignment SE3, pairs " << a.pairs << "\n";
  } else {
    std::cout << "alignment none\n";
  }
  std::printf("ate_rmse_m %.9f\n", eval::ate_rmse(aligned, gt, max_dt));
  return kOk;
}

int cmd_audit(std::size_t configs, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = audit::run_audit(configs, seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = true;
  std::printf("%-40s %8s %14s %10s %s\n", "suite", "configs", "max_rel_err", "tol", "result");
  for (const auto& r : rows) {
    const char* verdict = !r.asserted ? "INFO" : (r.pass() ? "PASS" : "FAIL");
    std::printf("%-40s %8zu %14.3e %10.1e %s\n", r.name.c_str(), r.configs, r.max_rel_err, r.tol, verdict);
    ok = ok && r.pass();
  }
  std::printf("runtime %.2f s\n", secs);
  return ok ? kOk : kNumerical;
}

int cmd_sweep(const std::vector<double>& depths, std::size_t runs, std::uint64_t seed, double duration,
              const update::UpdateOptions& update, const std::string& out) {
  const auto rows = experiment::sweep_depth(depths, runs, seed, duration, update);
  std::ofstream f(out);
  if (!f) throw Error(ErrorCode::IoError, "cannot write '" + out + "'");
  f << "depth_m,seed,rmse_vio_m,rmse_dr_m,final_error_m,aborted\n";
  f.precision(9);
  for (const auto& r : rows) {
    f << r.depth << ',' << r.seed << ',' << r.rmse_vio << ',' << r.rmse_dr << ',' << r.final_error << ','
      << (r.aborted ? 1 : 0) << '\n';
    std::printf("depth %8.1f seed %4llu  vio %10.4f m  dr %10.4f m%s\n", r.depth,
                static_cast<unsigned long long>(r.seed), r.rmse_vio, r.rmse_dr, r.aborted ? "  ABORTED" : "");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-only MSCKF visual-inertial odometry"};
  app.require_subcommand(1);

  SimArgs sim_args;
  auto* sim_cmd = app.add_subcommand("sim", "generate a synthetic dataset");
  sim_cmd->add_option("--kind", sim_args.kind, "circle | figure-eight | straight-with-turns");
  sim_cmd->add_option("--duration", sim_args.duration, "seconds");
  sim_cmd->add_option("--extent", sim_args.extent, "radius / half width / leg length [m]");
  sim_cmd->add_option("--speed", sim_args.speed, "m/s");
  sim_cmd->add_option("--imu-rate", sim_args.imu_rate, "Hz");
  sim_cmd->add_option("--cam-rate", sim_args.cam_rate, "Hz");
  sim_cmd->add_option("--seed", sim_args.seed);
  sim_cmd->add_option("--noise", sim_args.noise, "mems | none");
  sim_cmd->add_option("--depth-min", sim_args.depth_min, "m");
  sim_cmd->add_option("--depth-max", sim_args.depth_max, "m");
  sim_cmd->add_option("--out", sim_args.out, "output directory");

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run the filter on IMU and track files");
  run_cmd->add_option("config", config_path, "key = value config file")->required();

  std::string est_path, gt_path;
  double max_dt = 0.01;
  bool no_align = false;
  auto* eval_cmd = app.add_subcommand("eval", "align an estimate to ground truth and report ATE RMSE");
  eval_cmd->add_option("estimate", est_path, "TUM trajectory")->required();
  eval_cmd->add_option("groundtruth", gt_path, "TUM trajectory or ground-truth CSV")->required();
  eval_cmd->add_option("--max-dt", max_dt, "association window [s]");
  eval_cmd->add_flag("--no-align", no_align, "skip SE3 alignment");

  std::size_t configs = 100;
  std::uint64_t audit_seed = 7;
  auto* audit_cmd = app.add_subcommand("audit-jacobians", "finite-difference audit of the analytic Jacobians");
  audit_cmd->add_option("--configs", configs);
  audit_cmd->add_option("--seed", audit_seed);

  std::vector<double> depths{5.0, 50.0, 500.0};
  std::size_t runs = 3;
  std::uint64_t sweep_seed = 100;
  double sweep_duration = 60.0;
  std::string sweep_out = "sweep_depth.csv";
  auto* sweep_cmd = app.add_subcommand("sweep-depth", "Monte-Carlo accuracy against landmark depth");
  sweep_cmd->add_option("--depths", depths, "mean landmark depths [m]")->delimiter(',');
  sweep_cmd->add_option("--runs", runs, "runs per depth");
  sweep_cmd->add_option("--seed", sweep_seed);
  sweep_cmd->add_option("--duration", sweep_duration, "seconds");
  sweep_cmd->add_option("--out", sweep_out, "CSV output");
  std::string noise_mode = "independent";
  bool exact_theta = false;
  sweep_cmd->add_option("--noise-mode", noise_mode, "independent | propagated")
      ->check(CLI::IsMember({"independent", "propagated"}));
  sweep_cmd->add_flag("--exact-theta", exact_theta, "include the attitude derivative through theta");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*sim_cmd) return cmd_sim(sim_args);
    if (*run_cmd) return cmd_run(config_path);
    if (*eval_cmd) return cmd_eval(est_path, gt_path, max_dt, !no_align);
    if (*audit_cmd) return cmd_audit(configs, audit_seed);
    if (*sweep_cmd) {
      update::UpdateOptions u;
      u.noise_mode = noise_mode == "propagated" ? update::NoiseMode::Propagated : update::NoiseMode::Independent;
      u.exact_theta_attitude = exact_theta;
      return cmd_sweep(depths, runs, sweep_seed, sweep_duration, u, sweep_out);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    if (e.code() == ErrorCode::ConfigError) return kUsage;
    return is_numerical(e.code()) ? kNumerical : kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
