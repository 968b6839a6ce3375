#pragma once

// Simulated end-to-end runs: simulate, filter, dead-reckon and score.

#include "pomsckf/pipeline.hpp"
#include "pomsckf/sim.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pomsckf::experiment {

/// Filter options matching the simulator's noise and camera model.
pipeline::FilterOptions matched_options(const sim::SimConfig& sim);

struct ExperimentOptions {
  /// Draw the initial pose/velocity estimate from the initial covariance
  /// instead of starting exactly at the truth.
  bool perturb_init = true;
  std::uint64_t init_seed = 0;
};

struct ExperimentResult {
  double rmse_vio = 0.0;  // unaligned, over frames
  double rmse_dr = 0.0;
  double final_error = 0.0;
  std::vector<double> times;
  std::vector<double> nees;  // 6-DoF pose NEES per frame
  std::size_t updates = 0;
  std::size_t rejected_tracks = 0;
  std::map<std::string, std::size_t> reasons;  // diagnostic reason counts
  bool aborted = false;
};

ExperimentResult run_experiment(const sim::SimConfig& sim, const pipeline::FilterOptions& filter,
                                const ExperimentOptions& opt = {});

/// Noise preset used by the Monte-Carlo runs: MEMS-grade gyro/accel white
/// noise, 1 px at 450 px focal length.
sim::SimConfig mems_config(std::uint64_t seed, double duration = 120.0);

struct DepthRow {
  double depth = 0.0;
  std::uint64_t seed = 0;
  double rmse_vio = 0.0;
  double rmse_dr = 0.0;
  double final_error = 0.0;
  bool aborted = false;
};

/// Landmark depth drawn in [0.5, 1.5] x mean depth.
std::vector<DepthRow> sweep_depth(const std::vector<double>& depths, std::size_t runs, std::uint64_t seed,
                                  double duration, const update::UpdateOptions& update = {});

}  // namespace pomsckf::experiment
