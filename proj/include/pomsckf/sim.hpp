#pragma once

// Synthetic world: analytic trajectories, IMU streams and feature tracks.

#include "pomsckf/imu.hpp"
#include "pomsckf/update.hpp"
#include "pomsckf/window.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pomsckf::sim {

using geom::Quatd;
using geom::Vec3d;

enum class TrajectoryKind { Circle, FigureEight, StraightWithTurns };

TrajectoryKind parse_kind(const std::string& name);
std::string to_string(TrajectoryKind kind);

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Circle;
  double extent = 20.0;  // circle radius, figure-eight half width, straight leg length [m]
  double speed = 3.0;    // m/s (mean speed for the figure-eight)
  double duration = 60.0;
  double imu_rate = 200.0;
  double cam_rate = 20.0;
  double z_amplitude = 0.0;  // optional vertical oscillation [m]
  double z_period = 20.0;    // s
  double turn_duration = 4.0;  // straight-with-turns only [s]

  void validate() const;
};

/// Ground truth at one instant. omega_b is the body rate relative to the
/// world frame, expressed in the body frame.
struct TruthSample {
  double t = 0.0;
  Quatd q_b_w = Quatd::Identity();
  Vec3d p_w = Vec3d::Zero();
  Vec3d v_w = Vec3d::Zero();
  Vec3d a_w = Vec3d::Zero();
  Vec3d omega_b = Vec3d::Zero();
};

class Trajectory {
 public:
  explicit Trajectory(const TrajectorySpec& spec);

  TruthSample evaluate(double t) const;
  const TrajectorySpec& spec() const { return spec_; }
  /// Period of the closed figure-eight / circle in seconds.
  double period() const;

 private:
  struct Heading {
    double psi, rate, accel;
  };
  Heading heading(double t) const;
  Vec3d planar_position(double t) const;

  TrajectorySpec spec_;
  double omega_ = 0.0;  // angular frequency of circle / figure-eight
  // straight-with-turns: positions integrated at a fine grid
  double grid_step_ = 0.01;
  std::vector<Vec3d> grid_;
};

/// Truth at every IMU timestamp t = n / imu_rate, n = 0..duration*imu_rate.
std::vector<TruthSample> gen_trajectory(const TrajectorySpec& spec);

struct BiasSpec {
  double sigma_bg0 = 0.0;  // initial bias std [rad/s]
  double sigma_ba0 = 0.0;  // [m/s^2]
};

struct ImuStream {
  std::vector<imu::ImuSample> samples;
  std::vector<Vec3d> b_g;  // true biases per sample
  std::vector<Vec3d> b_a;
};

ImuStream gen_imu(const std::vector<TruthSample>& truth, const imu::WorldModel& world, const imu::ImuNoiseSpec& noise,
                  std::uint64_t seed, const BiasSpec& bias = {});

struct Landmark {
  std::int64_t id = 0;
  Vec3d p_w = Vec3d::Zero();
};

struct CameraSpec {
  window::Extrinsics ext;
  double fov_deg = 90.0;
};

/// Side-looking camera (optical axis along body -y) with a small lever arm.
CameraSpec default_camera();

struct PointSpec {
  double points_per_second = 8.0;
  double z_min = 4.0;
  double z_max = 12.0;
};

/// Landmarks placed in front of the camera at random trajectory instants
/// with camera depth uniform in [z_min, z_max].
std::vector<Landmark> gen_points(const Trajectory& traj, const CameraSpec& cam, const PointSpec& spec,
                                 std::uint64_t seed);

struct Frame {
  std::int64_t id = 0;
  double t = 0.0;
};

std::vector<Frame> gen_frames(const TrajectorySpec& spec);

/// Projects landmarks into every frame they are visible in (positive depth,
/// inside the FOV cone), adds N(0, sigma_n^2) noise, and splits visibility
/// runs into tracks of at most max_track_len observations. Each track gets a
/// fresh feature id.
std::vector<update::FeatureTrack> gen_tracks(const Trajectory& traj, const std::vector<Frame>& frames,
                                             const std::vector<Landmark>& points, const CameraSpec& cam,
                                             double sigma_n, std::uint64_t seed, std::size_t max_track_len = 11);

struct SimConfig {
  TrajectorySpec trajectory;
  imu::WorldModel world;
  imu::ImuNoiseSpec imu_noise;
  BiasSpec bias;
  CameraSpec camera = default_camera();
  PointSpec points;
  update::NoiseModel pixel_noise{0.0, 450.0};
  std::size_t max_track_len = 11;
  std::uint64_t seed = 1;
};

struct SimOutput {
  std::vector<TruthSample> truth;
  ImuStream imu;
  std::vector<Frame> frames;
  std::vector<Landmark> landmarks;
  std::vector<update::FeatureTrack> tracks;
  SimConfig config;
};

SimOutput simulate(const SimConfig& config);

imu::NavState nav_from_truth(const TruthSample& s);

}  // namespace pomsckf::sim
