#include "pomsckf/audit.hpp"

#include "pomsckf/error.hpp"
#include "pomsckf/po_jacobians.hpp"
#include "pomsckf/update.hpp"
#include "pomsckf/window.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace pomsckf::audit {

using geom::Mat3d;
using pose_only::BasePair;

namespace {

Vec3d unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3d v(n(rng), n(rng), n(rng));
  return v.normalized();
}

double uniform(std::mt19937_64& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

/// Factors of the point prediction evaluated at the given poses.
struct Factors {
  double scale;       // |[t_jk x] p_k|
  double theta;       // |[p_k x] R_jk p_j|
  Vec3d rotated_pj;   // R_ji p_j
  Vec3d t_ji;
};

Factors factors(const std::vector<Vec2d>& obs, const std::vector<CameraPose<double>>& poses, std::size_t i,
                const BasePair<double>& b) {
  const Vec3d hj = pose_only::homogeneous(obs[b.j]);
  const Vec3d hk = pose_only::homogeneous(obs[b.k]);
  const auto jk = pose_only::relative_pose(poses[b.j], poses[b.k]);
  const auto ji = pose_only::relative_pose(poses[b.j], poses[i]);
  return {jk.t.cross(hk).norm(), hk.cross(jk.R * hj).norm(), ji.R * hj, ji.t};
}

enum class Coord { Attitude, Position };

/// Central difference of f(poses) w.r.t. attitude or position of view ii.
Eigen::MatrixXd central_difference(const std::function<Eigen::VectorXd(const std::vector<CameraPose<double>>&)>& f,
                                   const std::vector<CameraPose<double>>& poses, std::size_t ii, Coord coord,
                                   double h) {
  Eigen::MatrixXd J;
  for (int a = 0; a < 3; ++a) {
    Vec3d d = Vec3d::Zero();
    d(a) = h;
    auto plus = poses;
    auto minus = poses;
    if (coord == Coord::Attitude) {
      plus[ii] = perturb(poses[ii], d, Vec3d::Zero());
      minus[ii] = perturb(poses[ii], -d, Vec3d::Zero());
    } else {
      plus[ii] = perturb(poses[ii], Vec3d::Zero(), d);
      minus[ii] = perturb(poses[ii], Vec3d::Zero(), -d);
    }
    const Eigen::VectorXd col = (f(plus) - f(minus)) / (2.0 * h);
    if (J.size() == 0) J.resize(col.size(), 3);
    J.col(a) = col;
  }
  return J;
}

/// A random configuration with a valid base pair and a valid prediction
/// at the target view.
struct Config {
  Scene scene;
  BasePair<double> base;
  std::size_t target = 0;
};

Config random_config(std::mt19937_64& rng) {
  for (;;) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 6)(rng);
    SceneOptions so;
    so.obs_noise = 1e-3;
    Config c{random_scene(rng, n, so), {}, 0};
    try {
      c.base = pose_only::select_base_views<double>(c.scene.obs, c.scene.poses);
      c.target = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      // spread targets over the special cases i = j and i = k
      const double u = uniform(rng, 0.0, 1.0);
      if (u < 0.2) c.target = c.base.j;
      if (u > 0.8) c.target = c.base.k;
      pose_only::po_point<double>(c.scene.obs, c.scene.poses, c.target, c.base);
      return c;
    } catch (const Error&) {
    }
  }
}

Eigen::VectorXd as_vector(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

Scene random_scene(std::mt19937_64& rng, std::size_t views, const SceneOptions& opt) {
  Scene s;
  s.p_w = Vec3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  std::normal_distribution<double> noise(0.0, 1.0);
  while (s.poses.size() < views) {
    const Vec3d center = s.p_w + uniform(rng, opt.min_range, opt.max_range) * unit_vector(rng);
    // optical axis within `spread` of the landmark direction
    const Vec3d to_point = (s.p_w - center).normalized();
    const Vec3d tilt = unit_vector(rng).cross(to_point).normalized() * uniform(rng, 0.0, opt.spread);
    const Vec3d z = geom::so3_exp(tilt) * to_point;
    Vec3d x = unit_vector(rng).cross(z).normalized();
    const Vec3d y = z.cross(x);
    Mat3d R_c_w;
    R_c_w << x, y, z;
    CameraPose<double> pose{R_c_w.transpose(), center};
    const Vec3d pc = pose.R_w_c * (s.p_w - center);
    if (pc.z() < 0.5) continue;
    s.poses.push_back(pose);
    s.points_cam.push_back(pc);
    Vec2d xy = pc.head<2>() / pc.z();
    if (opt.obs_noise > 0.0) xy += opt.obs_noise * Vec2d(noise(rng), noise(rng));
    s.obs.push_back(xy);
  }
  return s;
}

CameraPose<double> perturb(const CameraPose<double>& pose, const Vec3d& phi, const Vec3d& dp) {
  return {pose.R_w_c * geom::so3_exp(phi), pose.t_c_w + dp};
}

double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric, double floor) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), floor});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

std::vector<AuditRow> run_audit(std::size_t configs, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  std::vector<AuditRow> rows = {
      {"A1 (scale wrt attitude)", 0, 0.0, 1e-5, true},
      {"A (scale term, attitude)", 0, 0.0, 1e-5, true},
      {"B (R_ji term, attitude)", 0, 0.0, 1e-5, true},
      {"D (t_ji term, attitude)", 0, 0.0, 1e-5, true},
      {"E1 (scale wrt position)", 0, 0.0, 1e-5, true},
      {"E (scale term, position)", 0, 0.0, 1e-5, true},
      {"F (t_ji term, position)", 0, 0.0, 1e-5, true},
      {"projection jacobian", 0, 0.0, 1e-6, true},
      {"dpo_dpos full (E+F)", 0, 0.0, 1e-5, true},
      {"residual row, theta frozen", 0, 0.0, 1e-5, true},
      {"clone jacobian", 0, 0.0, 1e-5, true},
      {"residual row, theta free (C omitted)", 0, 0.0, 0.0, false},
      {"residual row, theta free (exact C)", 0, 0.0, 1e-5, true},
  };
  auto record = [&](std::size_t row, double err) {
    rows[row].max_rel_err = std::max(rows[row].max_rel_err, err);
    ++rows[row].configs;
  };

  for (std::size_t c = 0; c < configs; ++c) {
    const Config cfg = random_config(rng);
    const auto& obs = cfg.scene.obs;
    const auto& poses = cfg.scene.poses;
    const auto& base = cfg.base;
    const std::size_t i = cfg.target;
    const std::size_t n = poses.size();
    const pose_only::PoTerms<double> terms(obs, poses, i, base);
    const Factors f0 = factors(obs, poses, i, base);

    auto scale_fn = [&](const std::vector<CameraPose<double>>& p) { return as_vector(factors(obs, p, i, base).scale); };
    auto a_fn = [&](const std::vector<CameraPose<double>>& p) -> Eigen::VectorXd {
      return factors(obs, p, i, base).scale * f0.rotated_pj;
    };
    auto b_fn = [&](const std::vector<CameraPose<double>>& p) -> Eigen::VectorXd {
      return f0.scale * factors(obs, p, i, base).rotated_pj;
    };
    auto d_fn = [&](const std::vector<CameraPose<double>>& p) -> Eigen::VectorXd {
      return f0.theta * factors(obs, p, i, base).t_ji;
    };
    auto point_fn = [&](const std::vector<CameraPose<double>>& p) -> Eigen::VectorXd {
      return pose_only::po_point<double>(obs, p, i, base);
    };

    // stack every view so the zero cases are covered too
    Eigen::MatrixXd an[7], fd[7];
    for (auto& m : an) m.resize(0, 3);
    auto append = [](Eigen::MatrixXd& dst, const Eigen::MatrixXd& src) {
      Eigen::MatrixXd out(dst.rows() + src.rows(), 3);
      out << dst, src;
      dst = out;
    };
    for (int t = 0; t < 7; ++t) fd[t].resize(0, 3);
    Eigen::MatrixXd an_pos(0, 3), fd_pos(0, 3);
    for (std::size_t ii = 0; ii < n; ++ii) {
      append(an[0], terms.A1(ii));
      append(fd[0], central_difference(scale_fn, poses, ii, Coord::Attitude, h));
      append(an[1], terms.A(ii));
      append(fd[1], central_difference(a_fn, poses, ii, Coord::Attitude, h));
      append(an[2], terms.B(ii));
      append(fd[2], central_difference(b_fn, poses, ii, Coord::Attitude, h));
      append(an[3], terms.D(ii));
      append(fd[3], central_difference(d_fn, poses, ii, Coord::Attitude, h));
      append(an[4], terms.E1(ii));
      append(fd[4], central_difference(scale_fn, poses, ii, Coord::Position, h));
      append(an[5], terms.E(ii));
      append(fd[5], central_difference(a_fn, poses, ii, Coord::Position, h));
      append(an[6], terms.F(ii));
      append(fd[6], central_difference(d_fn, poses, ii, Coord::Position, h));
      append(an_pos, terms.dpo_dpos(ii));
      append(fd_pos, central_difference(point_fn, poses, ii, Coord::Position, h));
    }
    for (int t = 0; t < 7; ++t) record(t, relative_error(an[t], fd[t]));
    record(8, relative_error(an_pos, fd_pos));

    // projection of the predicted point
    {
      const Vec3d p = pose_only::po_point<double>(obs, poses, i, base);
      Eigen::Matrix<double, 2, 3> num;
      for (int a = 0; a < 3; ++a) {
        Vec3d d = Vec3d::Zero();
        d(a) = h;
        const Vec3d pp = p + d, pm = p - d;
        num.col(a) = (pp.head<2>() / pp.z() - pm.head<2>() / pm.z()) / (2.0 * h);
      }
      record(7, relative_error(pose_only::projection_jacobian(p), num));
    }

    // full residual row against the state layout, with and without the
    // attitude dependence of theta
    if (i != base.j) {
      std::vector<std::size_t> slots(n);
      for (std::size_t v = 0; v < n; ++v) slots[v] = v;
      const Eigen::Index dim = window::FilterState::clone_offset(n);
      const auto row = update::residual_jacobian_row(obs, poses, slots, i, base, dim);
      auto frozen = [&](const std::vector<CameraPose<double>>& p) -> Eigen::VectorXd {
        const Factors fp = factors(obs, p, i, base);
        const Vec3d q = fp.scale * fp.rotated_pj + f0.theta * fp.t_ji;
        return pose_only::po_residual(obs[i], q);
      };
      auto free = [&](const std::vector<CameraPose<double>>& p) -> Eigen::VectorXd {
        return pose_only::po_residual(obs[i], pose_only::po_point<double>(obs, p, i, base));
      };
      Eigen::MatrixXd num_frozen = Eigen::MatrixXd::Zero(2, dim);
      Eigen::MatrixXd num_free = Eigen::MatrixXd::Zero(2, dim);
      for (std::size_t ii = 0; ii < n; ++ii) {
        const Eigen::Index col = window::FilterState::clone_offset(ii);
        num_frozen.block(0, col, 2, 3) = central_difference(frozen, poses, ii, Coord::Attitude, h);
        num_frozen.block(0, col + 3, 2, 3) = central_difference(frozen, poses, ii, Coord::Position, h);
        num_free.block(0, col, 2, 3) = central_difference(free, poses, ii, Coord::Attitude, h);
        num_free.block(0, col + 3, 2, 3) = central_difference(free, poses, ii, Coord::Position, h);
      }
      record(9, relative_error(row.H, num_frozen));
      record(11, relative_error(row.H, num_free));
      const auto exact = update::residual_jacobian_row(obs, poses, slots, i, base, dim, {}, true);
      record(12, relative_error(exact.H, num_free));
    }

    // clone jacobian: camera pose error induced by a body error
    {
      imu::NavState nav;
      nav.q_b_w = geom::canonical(geom::quat_exp(Vec3d(M_PI * unit_vector(rng) * uniform(rng, 0, 1))));
      nav.v_w = unit_vector(rng);
      nav.p_w = 5.0 * unit_vector(rng);
      window::Extrinsics ext;
      ext.q_c_b = geom::canonical(geom::quat_exp(Vec3d(unit_vector(rng))));
      ext.p_c_b = 0.2 * unit_vector(rng);
      const Eigen::MatrixXd J = window::clone_jacobian(nav, ext, 0);
      Eigen::MatrixXd num(6, imu::kImuDim);
      const auto nominal = window::camera_from_body(nav, ext, 0.0, 0);
      auto clone_error = [&](const imu::Vec15& dx) {
        // dx is the error of `nav` relative to the perturbed truth
        const auto truth = window::camera_from_body(imu::correct(nav, dx), ext, 0.0, 0);
        Eigen::Matrix<double, 6, 1> e;
        e << geom::attitude_error<double>(geom::quat_to_rot(truth.q_c_w), geom::quat_to_rot(nominal.q_c_w)),
            nominal.p_c_w - truth.p_c_w;
        return e;
      };
      for (int a = 0; a < imu::kImuDim; ++a) {
        imu::Vec15 d = imu::Vec15::Zero();
        d(a) = h;
        num.col(a) = (clone_error(d) - clone_error(-d)) / (2.0 * h);
      }
      record(10, relative_error(J, num));
    }
  }
  return rows;
}

}  // namespace pomsckf::audit
