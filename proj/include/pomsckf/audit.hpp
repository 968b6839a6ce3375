#pragma once

// Finite-difference audit of every analytic Jacobian in the filter.

#include "pomsckf/po_geometry.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pomsckf::audit {

using geom::Vec2d;
using geom::Vec3d;
using pose_only::CameraPose;

/// Cameras scattered around one landmark, all looking roughly at it.
struct Scene {
  std::vector<CameraPose<double>> poses;
  std::vector<Vec2d> obs;         // normalized observations (noisy if requested)
  std::vector<Vec3d> points_cam;  // true landmark in each camera frame
  Vec3d p_w = Vec3d::Zero();
};

struct SceneOptions {
  double min_range = 2.0;
  double max_range = 10.0;
  double spread = 0.4;          // max off-axis angle of the landmark [rad]
  double obs_noise = 0.0;       // std of normalized observation noise
};

Scene random_scene(std::mt19937_64& rng, std::size_t views, const SceneOptions& opt = {});

/// Poses perturbed in the clone error convention: R_w_c <- R_w_c Exp(phi),
/// t <- t + dp.
CameraPose<double> perturb(const CameraPose<double>& pose, const Vec3d& phi, const Vec3d& dp);

struct AuditRow {
  std::string name;
  std::size_t configs = 0;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool asserted = true;  // informational rows are measured, not asserted

  bool pass() const { return !asserted || max_rel_err < tol; }
};

/// Runs every suite on `configs` random nonsingular configurations.
std::vector<AuditRow> run_audit(std::size_t configs = 100, std::uint64_t seed = 7, double step = 1e-6);

/// max|a - b| / max(max|a|, max|b|, floor). The floor keeps terms that
/// vanish analytically (where differencing leaves only round-off) from
/// reading as a 100% error.
double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric, double floor = 1e-3);

}  // namespace pomsckf::audit
