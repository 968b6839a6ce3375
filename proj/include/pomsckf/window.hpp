#pragma once

// Sliding window of cloned camera poses and the joint covariance.
//
// Joint error ordering: [imu(15), phi_c1, dp_c1, ..., phi_cN, dp_cN]. Clone
// errors follow the IMU conventions: q_true = dq(phi) * q_est, dp = est - true.

#include "pomsckf/imu.hpp"
#include "pomsckf/po_geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace pomsckf::window {

using geom::Quatd;
using geom::Vec3d;
using imu::NavState;

struct Extrinsics {
  Quatd q_c_b = Quatd::Identity();  // camera -> body
  Vec3d p_c_b = Vec3d::Zero();      // camera origin in body frame
};

struct CloneEntry {
  std::int64_t clone_id = 0;
  double t = 0.0;
  Quatd q_c_w = Quatd::Identity();
  Vec3d p_c_w = Vec3d::Zero();

  pose_only::CameraPose<double> camera_pose() const {
    return {geom::quat_to_rot(q_c_w).transpose(), p_c_w};
  }
};

constexpr int kCloneDim = 6;

struct FilterState {
  double t = 0.0;
  NavState nav;
  std::vector<CloneEntry> clones;
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(imu::kImuDim, imu::kImuDim);

  Eigen::Index dim() const { return imu::kImuDim + kCloneDim * static_cast<Eigen::Index>(clones.size()); }
  static Eigen::Index clone_offset(std::size_t slot) {
    return imu::kImuDim + kCloneDim * static_cast<Eigen::Index>(slot);
  }
  std::optional<std::size_t> slot_of(std::int64_t clone_id) const;
};

/// Camera pose implied by the body state and fixed extrinsics.
CloneEntry camera_from_body(const NavState& nav, const Extrinsics& ext, double t, std::int64_t clone_id);

/// d[phi_c, dp_c] / d(joint error) for a new clone, 6 x (15 + 6N).
Eigen::MatrixXd clone_jacobian(const NavState& nav, const Extrinsics& ext, std::size_t num_clones);

/// Appends a clone of the current camera pose. Throws WindowFull when the
/// window already holds max_clones clones, TimestampOrder if t_image is
/// older than the newest clone.
FilterState augment(const FilterState& state, double t_image, const Extrinsics& ext, std::size_t max_clones = 11,
                    std::optional<std::int64_t> clone_id = std::nullopt);

/// Removes the listed clones and their covariance rows/columns. Throws
/// NoSuchClone for ids not in the window.
FilterState marginalize(const FilterState& state, std::span<const std::int64_t> ids);

}  // namespace pomsckf::window
