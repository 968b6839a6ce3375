#include "pomsckf/evaluation.hpp"

#include "pomsckf/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace pomsckf::eval {

std::vector<std::pair<std::size_t, std::size_t>> associate(const io::TrajectoryEstimate& est,
                                                           const io::TrajectoryEstimate& gt, double max_dt) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (gt.empty()) return pairs;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].t;
    const auto it = std::lower_bound(gt.begin(), gt.end(), t, [](const auto& s, double v) { return s.t < v; });
    std::size_t best = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - gt.begin(), gt.size() - 1));
    if (best > 0 && std::abs(gt[best - 1].t - t) <= std::abs(gt[best].t - t)) --best;
    if (std::abs(gt[best].t - t) <= max_dt) pairs.emplace_back(i, best);
  }
  return pairs;
}

Alignment align_umeyama(const io::TrajectoryEstimate& est, const io::TrajectoryEstimate& gt, double max_dt) {
  const auto pairs = associate(est, gt, max_dt);
  if (pairs.size() < 3) {
    throw Error(ErrorCode::AlignmentUnderdetermined,
                "alignment needs at least 3 associated poses, got " + std::to_string(pairs.size()));
  }
  Eigen::Matrix3Xd src(3, pairs.size());
  Eigen::Matrix3Xd dst(3, pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    src.col(n) = est[pairs[n].first].p;
    dst.col(n) = gt[pairs[n].second].p;
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  Alignment a;
  a.R = T.topLeftCorner<3, 3>();
  a.t = T.topRightCorner<3, 1>();
  a.pairs = pairs.size();
  return a;
}

io::TrajectoryEstimate apply(const Alignment& a, const io::TrajectoryEstimate& est) {
  io::TrajectoryEstimate out = est;
  const geom::Quatd qa(a.R);
  for (auto& p : out) {
    p.p = a.R * p.p + a.t;
    p.q = geom::canonical(geom::Quatd(qa * p.q).normalized());
  }
  return out;
}

double ate_rmse(const io::TrajectoryEstimate& est, const io::TrajectoryEstimate& gt, double max_dt) {
  const auto pairs = associate(est, gt, max_dt);
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [i, j] : pairs) sum += (est[i].p - gt[j].p).squaredNorm();
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

io::TrajectoryEstimate to_trajectory(const std::vector<io::GroundTruthSample>& gt) {
  io::TrajectoryEstimate out;
  out.reserve(gt.size());
  for (const auto& s : gt) out.push_back({s.t, s.p, s.q});
  return out;
}

}  // namespace pomsckf::eval
