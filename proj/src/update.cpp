#include "pomsckf/update.hpp"

#include "pomsckf/po_jacobians.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace pomsckf::update {

using pose_only::BasePair;
using pose_only::CameraPose;

ResidualRow residual_jacobian_row(std::span<const Vec2d> obs, std::span<const CameraPose<double>> poses,
                                  std::span<const std::size_t> slots, std::size_t i, const BasePair<double>& base,
                                  Eigen::Index state_dim, const pose_only::GeometryOptions& opt,
                                  bool exact_theta_attitude) {
  const Eigen::Vector3d p = pose_only::po_point(obs, poses, i, base, opt);
  const pose_only::PoTerms<double> terms(obs, poses, i, base);
  const pose_only::Mat23<double> proj = pose_only::projection_jacobian(p);

  ResidualRow row;
  row.r = pose_only::po_residual(obs[i], p);
  row.H = Eigen::MatrixXd::Zero(2, state_dim);
  std::array<std::size_t, 3> views{i, base.j, base.k};
  std::sort(views.begin(), views.end());
  const auto last = std::unique(views.begin(), views.end());
  for (auto it = views.begin(); it != last; ++it) {
    const Eigen::Index col = FilterState::clone_offset(slots[*it]);
    row.H.block<2, 3>(0, col) += proj * terms.dpo_dphi(*it);
    if (exact_theta_attitude) row.H.block<2, 3>(0, col) += proj * terms.C_exact(*it);
    row.H.block<2, 3>(0, col + 3) += proj * terms.dpo_dpos(*it);
  }
  return row;
}

MeasurementBatch track_measurement(const FeatureTrack& track, const FilterState& state, const NoiseModel& noise,
                                   const UpdateOptions& opt, std::vector<Rejection>* rejected) {
  const std::size_t n = track.observations.size();
  if (n < std::max<std::size_t>(opt.min_track_len, 2)) {
    throw Error(ErrorCode::NoMeasurements, "track " + std::to_string(track.feature_id) + " too short");
  }
  std::vector<Vec2d> obs;
  std::vector<CameraPose<double>> poses;
  std::vector<std::size_t> slots;
  obs.reserve(n);
  poses.reserve(n);
  slots.reserve(n);
  for (const auto& o : track.observations) {
    const auto slot = state.slot_of(o.clone_id);
    if (!slot) {
      throw Error(ErrorCode::NoSuchClone, "track " + std::to_string(track.feature_id) + " references clone " +
                                              std::to_string(o.clone_id));
    }
    obs.push_back(o.xy);
    poses.push_back(state.clones[*slot].camera_pose());
    slots.push_back(*slot);
  }

  const auto base = pose_only::select_base_views<double>(obs, poses, opt.geometry);

  const Eigen::Index dim = state.dim();
  std::vector<ResidualRow> rows;
  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> noise_rows;
  rows.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == base.j) continue;  // its residual is identically zero
    try {
      rows.push_back(residual_jacobian_row(obs, poses, slots, i, base, dim, opt.geometry, opt.exact_theta_attitude));
      if (opt.noise_mode == NoiseMode::Propagated) {
        noise_rows.push_back(pose_only::residual_noise_jacobian<double>(obs, poses, i, base));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonPositiveDepth) throw;
      if (rejected) rejected->push_back({track.feature_id, std::string(to_string(e.code())), double(i)});
    }
  }
  if (rows.empty()) {
    throw Error(ErrorCode::NoMeasurements, "track " + std::to_string(track.feature_id) + " has no usable rows");
  }

  const auto m = static_cast<Eigen::Index>(rows.size()) * 2;
  MeasurementBatch out;
  out.r.resize(m);
  out.H.resize(m, dim);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    out.r.segment<2>(2 * Eigen::Index(q)) = rows[q].r;
    out.H.middleRows<2>(2 * Eigen::Index(q)) = rows[q].H;
  }
  const double var = noise.sigma_n() * noise.sigma_n();
  Eigen::Index rows_out = m;
  if (opt.noise_mode == NoiseMode::Propagated) {
    Eigen::MatrixXd Jn(m, 2 * Eigen::Index(n));
    for (std::size_t q = 0; q < noise_rows.size(); ++q) Jn.middleRows<2>(2 * Eigen::Index(q)) = noise_rows[q];
    // The base-pair depth makes one residual direction insensitive to
    // observation noise, and short baselines push others close to it. Those
    // directions carry only second-order terms; keep the noise-driven
    // subspace (eigenvalues above 1e-3 of the largest).
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Jn * Jn.transpose());
    const Eigen::VectorXd& lambda = es.eigenvalues();
    const double cutoff = 1e-3 * lambda.maxCoeff();
    Eigen::Index first = 0;
    while (first < m && lambda(first) <= cutoff) ++first;
    rows_out = m - first;
    const Eigen::MatrixXd U = es.eigenvectors().rightCols(rows_out);
    out.r = U.transpose() * out.r;
    out.H = U.transpose() * out.H;
    out.R = var * Eigen::MatrixXd(lambda.tail(rows_out).asDiagonal());
  } else {
    out.R = var * Eigen::MatrixXd::Identity(m, m);
  }
  out.blocks.push_back({track.feature_id, 0, rows_out});
  return out;
}

namespace {

MeasurementBatch assemble(const std::vector<MeasurementBatch>& parts, Eigen::Index dim) {
  Eigen::Index m = 0;
  for (const auto& p : parts) m += p.rows();
  MeasurementBatch out;
  out.r.resize(m);
  out.H.resize(m, dim);
  out.R = Eigen::MatrixXd::Zero(m, m);
  Eigen::Index row = 0;
  for (const auto& p : parts) {
    const Eigen::Index k = p.rows();
    out.r.segment(row, k) = p.r;
    out.H.middleRows(row, k) = p.H;
    out.R.block(row, row, k, k) = p.R;
    for (auto b : p.blocks) {
      b.row += row;
      out.blocks.push_back(b);
    }
    row += k;
  }
  return out;
}

}  // namespace

MeasurementBatch build_batch(std::span<const FeatureTrack> tracks, const FilterState& state, const NoiseModel& noise,
                             const UpdateOptions& opt, std::vector<Rejection>* rejected) {
  std::vector<const FeatureTrack*> order;
  order.reserve(tracks.size());
  for (const auto& t : tracks) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(),
                   [](const FeatureTrack* a, const FeatureTrack* b) { return a->feature_id < b->feature_id; });

  std::vector<MeasurementBatch> parts;
  parts.reserve(order.size());
  for (const FeatureTrack* t : order) {
    if (t->observations.size() < opt.min_track_len) {
      if (rejected) rejected->push_back({t->feature_id, "too_short", double(t->observations.size())});
      continue;
    }
    try {
      parts.push_back(track_measurement(*t, state, noise, opt, rejected));
    } catch (const Error& e) {
      if (rejected) rejected->push_back({t->feature_id, std::string(to_string(e.code())), 0.0});
    }
  }
  if (parts.empty()) throw Error(ErrorCode::NoMeasurements, "no usable tracks");
  return assemble(parts, state.dim());
}

double chi2_quantile(double confidence, int dof) {
  static std::map<std::pair<double, int>, double> cache;
  const auto key = std::make_pair(confidence, dof);
  if (const auto it = cache.find(key); it != cache.end()) return it->second;
  const boost::math::chi_squared dist(dof);
  const double q = boost::math::quantile(dist, confidence);
  cache.emplace(key, q);
  return q;
}

GateResult gate(const Eigen::VectorXd& r, const Eigen::MatrixXd& H, const Eigen::MatrixXd& R,
                const Eigen::MatrixXd& P, double confidence) {
  GateResult out;
  out.threshold = chi2_quantile(confidence, static_cast<int>(r.size()));
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    out.statistic = std::numeric_limits<double>::infinity();
    return out;
  }
  out.statistic = r.dot(llt.solve(r));
  out.keep = out.statistic <= out.threshold;
  return out;
}

MeasurementBatch gate_batch(const MeasurementBatch& batch, const Eigen::MatrixXd& P, double confidence,
                            std::vector<Rejection>* rejected) {
  std::vector<MeasurementBatch> kept;
  for (const auto& b : batch.blocks) {
    MeasurementBatch part;
    part.r = batch.r.segment(b.row, b.rows);
    part.H = batch.H.middleRows(b.row, b.rows);
    part.R = batch.R.block(b.row, b.row, b.rows, b.rows);
    const GateResult g = gate(part.r, part.H, part.R, P, confidence);
    if (!g.keep) {
      if (rejected) {
        rejected->push_back({b.feature_id, std::isfinite(g.statistic) ? "gate_rejected" : "singular_innovation",
                             g.statistic});
      }
      continue;
    }
    part.blocks.push_back({b.feature_id, 0, b.rows});
    kept.push_back(std::move(part));
  }
  return assemble(kept, batch.H.cols());
}

Correction kalman_correction(const Eigen::MatrixXd& P, const MeasurementBatch& batch, double max_condition) {
  const Eigen::Index n = P.rows();
  const Eigen::Index m = batch.rows();
  if (m == 0) throw Error(ErrorCode::NoMeasurements, "empty batch");

  // whiten so that R = I
  Eigen::MatrixXd Hw(m, n);
  Eigen::VectorXd rw(m);
  std::vector<TrackBlock> blocks = batch.blocks;
  if (blocks.empty()) blocks.push_back({0, 0, m});
  for (const auto& b : blocks) {
    const Eigen::LLT<Eigen::MatrixXd> llt(batch.R.block(b.row, b.row, b.rows, b.rows));
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::IllConditioned, "measurement covariance of track " + std::to_string(b.feature_id));
    }
    Hw.middleRows(b.row, b.rows) = llt.matrixL().solve(batch.H.middleRows(b.row, b.rows));
    rw.segment(b.row, b.rows) = llt.matrixL().solve(batch.r.segment(b.row, b.rows));
  }

  Eigen::MatrixXd Hc;
  Eigen::VectorXd rc;
  if (m > n) {
    Eigen::MatrixXd aug(m, n + 1);
    aug << Hw, rw;
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(aug);
    const Eigen::MatrixXd T = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    Hc = T.leftCols(n);
    rc = T.col(n);
  } else {
    Hc = std::move(Hw);
    rc = std::move(rw);
  }

  const Eigen::MatrixXd HP = Hc * P;
  Eigen::MatrixXd S = HP * Hc.transpose();
  S.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success || llt.rcond() < 1.0 / max_condition) {
    throw Error(ErrorCode::IllConditioned, "innovation covariance condition exceeds limit");
  }
  const Eigen::MatrixXd K = llt.solve(HP).transpose();

  Correction out;
  out.dx = K * rc;
  Eigen::MatrixXd IKH = -K * Hc;
  IKH.diagonal().array() += 1.0;
  Eigen::MatrixXd Pn = IKH * P * IKH.transpose();
  Pn.noalias() += K * K.transpose();
  out.P = 0.5 * (Pn + Pn.transpose());
  return out;
}

Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H, const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  return Eigen::LDLT<Eigen::MatrixXd>(S).solve(H * P).transpose();
}

FilterState inject(const FilterState& state, const Eigen::VectorXd& dx) {
  FilterState out = state;
  out.nav = imu::correct(state.nav, dx.head<imu::kImuDim>());
  for (std::size_t s = 0; s < out.clones.size(); ++s) {
    const Eigen::Index off = FilterState::clone_offset(s);
    auto& c = out.clones[s];
    c.q_c_w = geom::apply_small_angle(c.q_c_w, Eigen::Vector3d(dx.segment<3>(off)));
    c.p_c_w -= dx.segment<3>(off + 3);
  }
  return out;
}

FilterState ekf_update(const FilterState& state, const MeasurementBatch& batch, const UpdateOptions& opt) {
  const Correction c = kalman_correction(state.P, batch, opt.max_condition);
  FilterState out = inject(state, c.dx);
  out.P = c.P;
  return out;
}

}  // namespace pomsckf::update
