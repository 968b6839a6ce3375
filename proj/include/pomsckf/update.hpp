#pragma once

// Pose-only measurement model: per-track residual stacking, chi-square
// gating and the EKF correction. No landmark is estimated and no null-space
// projection is needed: residuals depend on the clone poses only.

#include "pomsckf/error.hpp"
#include "pomsckf/po_geometry.hpp"
#include "pomsckf/window.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pomsckf::update {

using geom::Vec2d;
using window::FilterState;

struct TrackObservation {
  std::int64_t clone_id = 0;
  double t = 0.0;
  Vec2d xy = Vec2d::Zero();
};

struct FeatureTrack {
  std::int64_t feature_id = 0;
  std::vector<TrackObservation> observations;  // ordered by clone id
};

struct NoiseModel {
  double sigma_px = 1.0;
  double focal = 450.0;
  double sigma_n() const { return sigma_px / focal; }
};

enum class NoiseMode {
  Independent,  // R = sigma_n^2 I
  Propagated,   // R = sigma_n^2 J_n J_n^T, J_n = d r / d observations, rank-reduced
};

struct UpdateOptions {
  pose_only::GeometryOptions geometry;
  std::size_t min_track_len = 3;
  double gate_confidence = 0.95;
  double max_condition = 1e12;
  NoiseMode noise_mode = NoiseMode::Independent;
  /// Off: attitude Jacobian is A + B + C + D with C = 0. On: C is replaced
  /// by the true attitude derivative through theta.
  bool exact_theta_attitude = false;
};

/// Rows of the batch contributed by one track.
struct TrackBlock {
  std::int64_t feature_id = 0;
  Eigen::Index row = 0;
  Eigen::Index rows = 0;
};

struct MeasurementBatch {
  Eigen::VectorXd r;
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;
  std::vector<TrackBlock> blocks;

  Eigen::Index rows() const { return r.size(); }
  bool empty() const { return r.size() == 0; }
};

/// Why a track or row did not enter the update.
struct Rejection {
  std::int64_t feature_id = 0;
  std::string reason;
  double value = 0.0;
};

/// Residual and Jacobian row pair of target view i (i != base.j).
struct ResidualRow {
  Eigen::Vector2d r;
  Eigen::MatrixXd H;  // 2 x state dim
};

/// `slots` maps each view of the track to its clone slot in the window.
ResidualRow residual_jacobian_row(std::span<const Vec2d> obs, std::span<const pose_only::CameraPose<double>> poses,
                                  std::span<const std::size_t> slots, std::size_t i,
                                  const pose_only::BasePair<double>& base, Eigen::Index state_dim,
                                  const pose_only::GeometryOptions& opt = {}, bool exact_theta_attitude = false);

/// Stacks every usable row of one track. Throws DegenerateParallax,
/// NoSuchClone, NoMeasurements (too short or no usable rows).
MeasurementBatch track_measurement(const FeatureTrack& track, const FilterState& state, const NoiseModel& noise,
                                   const UpdateOptions& opt = {}, std::vector<Rejection>* rejected = nullptr);

/// Stacks all tracks (order: ascending feature id, then view). Tracks that
/// fail are listed in `rejected`. Throws NoMeasurements if nothing is usable.
MeasurementBatch build_batch(std::span<const FeatureTrack> tracks, const FilterState& state, const NoiseModel& noise,
                             const UpdateOptions& opt = {}, std::vector<Rejection>* rejected = nullptr);

struct GateResult {
  bool keep = false;
  double statistic = 0.0;
  double threshold = 0.0;
};

/// Mahalanobis test r^T (H P H^T + R)^-1 r <= chi2_quantile(confidence, rows).
GateResult gate(const Eigen::VectorXd& r, const Eigen::MatrixXd& H, const Eigen::MatrixXd& R,
                const Eigen::MatrixXd& P, double confidence = 0.95);

/// Drops tracks failing the gate; returns the kept rows.
MeasurementBatch gate_batch(const MeasurementBatch& batch, const Eigen::MatrixXd& P, double confidence = 0.95,
                            std::vector<Rejection>* rejected = nullptr);

double chi2_quantile(double confidence, int dof);

struct Correction {
  Eigen::VectorXd dx;
  Eigen::MatrixXd P;
};

/// K = P H^T (H P H^T + R)^-1, dx = K r, Joseph-form covariance. Tall
/// systems are whitened per track block and QR-compressed first; the result
/// is algebraically identical. Throws IllConditioned above max_condition.
Correction kalman_correction(const Eigen::MatrixXd& P, const MeasurementBatch& batch, double max_condition = 1e12);

/// Plain gain P H^T (H P H^T + R)^-1 without compression.
Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H, const Eigen::MatrixXd& R);

/// Applies an error estimate to nominal IMU and clone states.
FilterState inject(const FilterState& state, const Eigen::VectorXd& dx);

FilterState ekf_update(const FilterState& state, const MeasurementBatch& batch, const UpdateOptions& opt = {});

}  // namespace pomsckf::update
