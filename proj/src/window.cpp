#include "pomsckf/window.hpp"

#include "pomsckf/error.hpp"

#include <algorithm>
#include <string>

namespace pomsckf::window {

std::optional<std::size_t> FilterState::slot_of(std::int64_t clone_id) const {
  for (std::size_t s = 0; s < clones.size(); ++s) {
    if (clones[s].clone_id == clone_id) return s;
  }
  return std::nullopt;
}

CloneEntry camera_from_body(const NavState& nav, const Extrinsics& ext, double t, std::int64_t clone_id) {
  CloneEntry c;
  c.clone_id = clone_id;
  c.t = t;
  c.q_c_w = geom::canonical(Quatd(nav.q_b_w * ext.q_c_b));
  c.p_c_w = nav.p_w + nav.R_b_w() * ext.p_c_b;
  return c;
}

Eigen::MatrixXd clone_jacobian(const NavState& nav, const Extrinsics& ext, std::size_t num_clones) {
  const Eigen::Index n = imu::kImuDim + kCloneDim * static_cast<Eigen::Index>(num_clones);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(kCloneDim, n);
  J.block<3, 3>(0, imu::idx::att).setIdentity();
  J.block<3, 3>(3, imu::idx::att) = geom::skew(Vec3d(nav.R_b_w() * ext.p_c_b));
  J.block<3, 3>(3, imu::idx::pos).setIdentity();
  return J;
}

FilterState augment(const FilterState& state, double t_image, const Extrinsics& ext, std::size_t max_clones,
                    std::optional<std::int64_t> clone_id) {
  if (state.clones.size() >= max_clones) {
    throw Error(ErrorCode::WindowFull, "window holds " + std::to_string(state.clones.size()) + " clones");
  }
  if (!state.clones.empty() && t_image < state.clones.back().t) {
    throw Error(ErrorCode::TimestampOrder, "clone at " + std::to_string(t_image) + " older than newest clone");
  }
  const std::int64_t id = clone_id ? *clone_id : (state.clones.empty() ? 0 : state.clones.back().clone_id + 1);
  if (!state.clones.empty() && id <= state.clones.back().clone_id) {
    throw Error(ErrorCode::TimestampOrder, "clone ids must increase");
  }

  const Eigen::Index n = state.dim();
  const Eigen::MatrixXd J = clone_jacobian(state.nav, ext, state.clones.size());
  // J only touches the IMU attitude and position columns
  const Eigen::MatrixXd PJt = state.P * J.transpose();

  FilterState out;
  out.t = state.t;
  out.nav = state.nav;
  out.clones = state.clones;
  out.clones.push_back(camera_from_body(state.nav, ext, t_image, id));
  out.P.resize(n + kCloneDim, n + kCloneDim);
  out.P.topLeftCorner(n, n) = state.P;
  out.P.topRightCorner(n, kCloneDim) = PJt;
  out.P.bottomLeftCorner(kCloneDim, n) = PJt.transpose();
  const Eigen::Matrix<double, 6, 6> corner = J * PJt;
  out.P.bottomRightCorner<6, 6>() = 0.5 * (corner + corner.transpose());
  return out;
}

FilterState marginalize(const FilterState& state, std::span<const std::int64_t> ids) {
  std::vector<bool> drop(state.clones.size(), false);
  for (const auto id : ids) {
    const auto slot = state.slot_of(id);
    if (!slot) throw Error(ErrorCode::NoSuchClone, "clone " + std::to_string(id));
    drop[*slot] = true;
  }

  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(state.dim()));
  for (Eigen::Index i = 0; i < imu::kImuDim; ++i) keep.push_back(i);
  FilterState out;
  out.t = state.t;
  out.nav = state.nav;
  for (std::size_t s = 0; s < state.clones.size(); ++s) {
    if (drop[s]) continue;
    out.clones.push_back(state.clones[s]);
    const Eigen::Index off = FilterState::clone_offset(s);
    for (Eigen::Index i = 0; i < kCloneDim; ++i) keep.push_back(off + i);
  }
  out.P = state.P(keep, keep);
  return out;
}

}  // namespace pomsckf::window
