#pragma once

// Text formats shared by the simulator, the filter and the evaluator.
//
//   IMU CSV          timestamp_ns,wx,wy,wz,ax,ay,az
//   tracks CSV       feature_id,frame_id,timestamp_ns,x_norm,y_norm
//   ground truth CSV timestamp_ns,px,py,pz,qw,qx,qy,qz[,vx,vy,vz]
//   TUM trajectory   timestamp_s tx ty tz qx qy qz qw
//
// UTF-8, LF line endings; blank lines and lines starting with '#' are
// ignored.

#include "pomsckf/imu.hpp"
#include "pomsckf/update.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pomsckf::io {

using geom::Quatd;
using geom::Vec3d;

struct StampedPose {
  double t = 0.0;
  Vec3d p = Vec3d::Zero();
  Quatd q = Quatd::Identity();
};

using TrajectoryEstimate = std::vector<StampedPose>;

struct GroundTruthSample {
  double t = 0.0;
  Vec3d p = Vec3d::Zero();
  Quatd q = Quatd::Identity();
  std::optional<Vec3d> v;
};

struct FrameStamp {
  std::int64_t id = 0;
  double t = 0.0;
};

struct TrackSet {
  std::vector<update::FeatureTrack> tracks;  // ascending feature id
  std::vector<FrameStamp> frames;            // ascending frame id
};

std::int64_t seconds_to_ns(double t);
double ns_to_seconds(std::int64_t ns);

/// Throws ParseError (with line number), EmptyStream, TimestampOrder, IoError.
std::vector<imu::ImuSample> load_imu_csv(const std::filesystem::path& path);
void write_imu_csv(const std::filesystem::path& path, const std::vector<imu::ImuSample>& samples);

/// Throws ParseError, DuplicateObservation, IoError.
TrackSet load_tracks_csv(const std::filesystem::path& path);
void write_tracks_csv(const std::filesystem::path& path, const std::vector<update::FeatureTrack>& tracks);

std::vector<GroundTruthSample> load_groundtruth_csv(const std::filesystem::path& path);
void write_groundtruth_csv(const std::filesystem::path& path, const std::vector<GroundTruthSample>& samples);

TrajectoryEstimate load_tum(const std::filesystem::path& path);
void write_tum(const std::filesystem::path& path, const TrajectoryEstimate& poses,
               const std::vector<std::string>& header = {});

/// Splits a line on `sep` (',' or whitespace when sep == ' ').
std::vector<std::string> split(const std::string& line, char sep);
double parse_double(const std::string& token, const std::string& where);
std::int64_t parse_int(const std::string& token, const std::string& where);

}  // namespace pomsckf::io
