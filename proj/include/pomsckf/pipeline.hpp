#pragma once

// Filter orchestration: propagate, augment, update and marginalize at every
// image timestamp.

#include "pomsckf/imu.hpp"
#include "pomsckf/io.hpp"
#include "pomsckf/update.hpp"
#include "pomsckf/window.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace pomsckf::pipeline {

/// Initial 1-sigma uncertainties of the IMU block.
struct InitSigmas {
  double att = 1e-3;  // rad
  double vel = 1e-3;  // m/s
  double pos = 1e-3;  // m
  double bg = 1e-3;   // rad/s
  double ba = 1e-2;   // m/s^2
};

struct FilterOptions {
  update::NoiseModel noise;
  imu::ImuNoiseSpec imu_noise;
  imu::WorldModel world;
  window::Extrinsics ext;
  std::size_t max_clones = 11;
  update::UpdateOptions update;
  InitSigmas init;
};

struct RunConfig {
  std::filesystem::path imu_file;
  std::filesystem::path tracks_file;
  std::filesystem::path groundtruth_file;
  std::filesystem::path output_dir = "out";
  std::string init_mode = "ground-truth";
  FilterOptions filter;

  /// Throws ConfigError for out-of-range values, IoError for missing files.
  void validate() const;
};

/// Flat `key = value` text, '#' comments. Relative paths resolve against
/// `base_dir`. Unknown keys and malformed values throw ConfigError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const RunConfig& config);

struct DiagnosticEvent {
  double t = 0.0;
  std::string kind;  // track_rejected | update_skipped | frame_skipped | numeric
  std::int64_t feature_id = -1;
  std::string reason;
  double value = 0.0;
};

struct UpdateRecord {
  double t = 0.0;
  std::size_t candidates = 0;
  std::size_t used = 0;
  Eigen::Index rows = 0;
  double residual_norm = 0.0;
  double trace_before = 0.0;
  double trace_after = 0.0;
};

struct RunResult {
  io::TrajectoryEstimate poses;
  std::vector<DiagnosticEvent> events;
  std::vector<UpdateRecord> updates;
  bool aborted = false;
  std::string abort_message;
  window::FilterState last_valid;
};

using FrameCallback = std::function<void(const window::FilterState&)>;

window::FilterState initial_state(const imu::NavState& nav, double t0, const InitSigmas& sigmas);

/// Runs the filter over `frames` (ascending time). The first IMU sample
/// defines t0; frames outside the IMU span are skipped with a diagnostic.
/// `on_frame` sees the state after each frame's update.
RunResult run_filter(const FilterOptions& opt, const imu::NavState& init, const std::vector<imu::ImuSample>& imu,
                     const std::vector<update::FeatureTrack>& tracks, const std::vector<io::FrameStamp>& frames,
                     const FrameCallback& on_frame = {});

/// IMU-only integration from `init`, sampled at `times` (ascending, within
/// the IMU span).
io::TrajectoryEstimate dead_reckon(const imu::NavState& init, const std::vector<imu::ImuSample>& imu,
                                   const std::vector<double>& times, const imu::WorldModel& world = {});

/// Ground-truth initialization at t: pose interpolated, velocity from the
/// file or by central differences, biases zero.
imu::NavState nav_from_groundtruth(const std::vector<io::GroundTruthSample>& gt, double t);

void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<DiagnosticEvent>& events);
void write_updates_csv(const std::filesystem::path& path, const std::vector<UpdateRecord>& updates);
void write_state_dump(const std::filesystem::path& path, const window::FilterState& state);

}  // namespace pomsckf::pipeline
