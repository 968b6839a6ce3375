#pragma once

// Trajectory comparison: time association, rigid alignment, ATE.

#include "pomsckf/io.hpp"

#include <utility>
#include <vector>

namespace pomsckf::eval {

using geom::Mat3d;
using geom::Vec3d;

/// (est index, gt index) pairs; each estimate is matched to the nearest
/// ground-truth stamp if it lies within max_dt.
std::vector<std::pair<std::size_t, std::size_t>> associate(const io::TrajectoryEstimate& est,
                                                           const io::TrajectoryEstimate& gt, double max_dt = 0.01);

struct Alignment {
  Mat3d R = Mat3d::Identity();  // applied as R * p + t
  Vec3d t = Vec3d::Zero();
  std::size_t pairs = 0;
};

/// Closed-form SE(3) least-squares fit of est onto gt positions. Throws
/// AlignmentUnderdetermined for fewer than 3 associated pairs.
Alignment align_umeyama(const io::TrajectoryEstimate& est, const io::TrajectoryEstimate& gt, double max_dt = 0.01);

io::TrajectoryEstimate apply(const Alignment& a, const io::TrajectoryEstimate& est);

/// sqrt(mean |p_est - p_gt|^2) over associated pairs.
double ate_rmse(const io::TrajectoryEstimate& est, const io::TrajectoryEstimate& gt, double max_dt = 0.01);

io::TrajectoryEstimate to_trajectory(const std::vector<io::GroundTruthSample>& gt);

}  // namespace pomsckf::eval
