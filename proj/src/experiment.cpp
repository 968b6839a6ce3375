#include "pomsckf/experiment.hpp"

#include <cmath>
#include <random>

namespace pomsckf::experiment {

using geom::Vec3d;

pipeline::FilterOptions matched_options(const sim::SimConfig& sim) {
  pipeline::FilterOptions f;
  f.noise = sim.pixel_noise;
  if (f.noise.sigma_px <= 0.0) f.noise.sigma_px = 1e-3;  // keeps R invertible for noise-free data
  f.imu_noise = sim.imu_noise;
  f.world = sim.world;
  f.ext = sim.camera.ext;
  f.max_clones = sim.max_track_len;
  f.init.bg = std::max(sim.bias.sigma_bg0, 1e-6);
  f.init.ba = std::max(sim.bias.sigma_ba0, 1e-5);
  return f;
}

sim::SimConfig mems_config(std::uint64_t seed, double duration) {
  sim::SimConfig c;
  c.seed = seed;
  c.trajectory.kind = sim::TrajectoryKind::Circle;
  c.trajectory.extent = 20.0;
  c.trajectory.speed = 3.0;
  c.trajectory.duration = duration;
  c.trajectory.z_amplitude = 1.0;
  c.imu_noise = {1e-4, 1e-3, 1e-6, 1e-5};
  c.bias = {1e-3, 1e-2};
  c.pixel_noise = {1.0, 450.0};
  return c;
}

ExperimentResult run_experiment(const sim::SimConfig& sim_config, const pipeline::FilterOptions& filter,
                                const ExperimentOptions& opt) {
  const sim::SimOutput out = sim::simulate(sim_config);
  const sim::Trajectory traj(sim_config.trajectory);

  imu::NavState init = sim::nav_from_truth(out.truth.front());
  if (opt.perturb_init) {
    std::mt19937_64 rng(opt.init_seed ^ (sim_config.seed * 0x9E3779B97F4A7C15ull));
    std::normal_distribution<double> n(0.0, 1.0);
    auto draw = [&](double s) { return Vec3d(s * n(rng), s * n(rng), s * n(rng)); };
    imu::Vec15 dx = imu::Vec15::Zero();
    dx.segment<3>(imu::idx::att) = draw(filter.init.att);
    dx.segment<3>(imu::idx::vel) = draw(filter.init.vel);
    dx.segment<3>(imu::idx::pos) = draw(filter.init.pos);
    // est = truth shifted by dx in the error convention
    init.q_b_w = geom::apply_small_angle(init.q_b_w, Vec3d(-dx.segment<3>(imu::idx::att)));
    init.v_w += dx.segment<3>(imu::idx::vel);
    init.p_w += dx.segment<3>(imu::idx::pos);
  }
  // biases start at zero; the true initial bias is the error
  init.b_g.setZero();
  init.b_a.setZero();

  std::vector<io::FrameStamp> frames;
  std::vector<double> times;
  for (const auto& f : out.frames) {
    frames.push_back({f.id, f.t});
    times.push_back(f.t);
  }

  ExperimentResult res;
  double sum_vio = 0.0;
  auto on_frame = [&](const window::FilterState& s) {
    const sim::TruthSample truth = traj.evaluate(s.t);
    Eigen::Matrix<double, 6, 1> e;
    e << geom::attitude_error<double>(geom::quat_to_rot(truth.q_b_w), s.nav.R_b_w()), s.nav.p_w - truth.p_w;
    Eigen::Matrix<double, 6, 6> P;
    const std::array<int, 6> id{0, 1, 2, 6, 7, 8};
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) P(r, c) = s.P(id[r], id[c]);
    }
    res.times.push_back(s.t);
    res.nees.push_back(e.dot(P.ldlt().solve(e)));
    const double pe = (s.nav.p_w - truth.p_w).squaredNorm();
    sum_vio += pe;
    res.final_error = std::sqrt(pe);
  };
  const auto run = pipeline::run_filter(filter, init, out.imu.samples, out.tracks, frames, on_frame);
  res.aborted = run.aborted;
  res.updates = run.updates.size();
  for (const auto& e : run.events) {
    res.rejected_tracks += e.kind == "track_rejected";
    ++res.reasons[e.reason];
  }
  res.rmse_vio = res.times.empty() ? 0.0 : std::sqrt(sum_vio / double(res.times.size()));

  const auto dr = pipeline::dead_reckon(init, out.imu.samples, times, filter.world);
  double sum_dr = 0.0;
  for (const auto& p : dr) sum_dr += (p.p - traj.evaluate(p.t).p_w).squaredNorm();
  res.rmse_dr = dr.empty() ? 0.0 : std::sqrt(sum_dr / double(dr.size()));
  return res;
}

std::vector<DepthRow> sweep_depth(const std::vector<double>& depths, std::size_t runs, std::uint64_t seed,
                                  double duration, const update::UpdateOptions& update) {
  std::vector<DepthRow> rows;
  for (double depth : depths) {
    for (std::size_t r = 0; r < runs; ++r) {
      sim::SimConfig c = mems_config(seed + r, duration);
      c.points.z_min = 0.5 * depth;
      c.points.z_max = 1.5 * depth;
      auto filter = matched_options(c);
      filter.update = update;
      const auto res = run_experiment(c, filter);
      rows.push_back({depth, seed + r, res.rmse_vio, res.rmse_dr, res.final_error, res.aborted});
    }
  }
  return rows;
}

}  // namespace pomsckf::experiment
