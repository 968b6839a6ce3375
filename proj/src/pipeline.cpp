#include "pomsckf/pipeline.hpp"

#include "pomsckf/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace pomsckf::pipeline {

using geom::Quatd;
using geom::Vec3d;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v, key);
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigError, "config key '" + key + "': not a number: '" + v + "'");
  }
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::int64_t n = 0;
  try {
    n = io::parse_int(v, key);
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigError, "config key '" + key + "': not an integer: '" + v + "'");
  }
  if (n < 0) throw Error(ErrorCode::ConfigError, "config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(n);
}

std::vector<double> to_list(const std::string& key, const std::string& v, std::size_t n) {
  const auto parts = io::split(v, ',');
  if (parts.size() != n) {
    throw Error(ErrorCode::ConfigError,
                "config key '" + key + "' expects " + std::to_string(n) + " comma-separated numbers");
  }
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(to_double(key, p));
  return out;
}

Vec3d to_vec3(const std::string& key, const std::string& v) {
  const auto x = to_list(key, v, 3);
  return {x[0], x[1], x[2]};
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

std::string fmt(const Vec3d& v) { return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z()); }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

/// Walks the IMU stream forward, interpolating at arbitrary target times.
class Integrator {
 public:
  Integrator(const std::vector<imu::ImuSample>& imu, const imu::WorldModel& world) : imu_(imu), world_(world) {
    if (imu_.empty()) throw Error(ErrorCode::EmptyStream, "no IMU samples");
    cur_ = imu_.front();
  }

  double start() const { return imu_.front().t; }
  double end() const { return imu_.back().t; }

  /// Integrates to `t`; step(nav_before, u0, u1) is called before each step.
  template <typename StepFn>
  imu::NavState advance(imu::NavState nav, double t, StepFn&& step) {
    while (next_ < imu_.size() && imu_[next_].t <= t) {
      if (imu_[next_].t > cur_.t) {
        step(nav, cur_, imu_[next_]);
        nav = imu::propagate_nominal(nav, cur_, imu_[next_], world_);
      }
      cur_ = imu_[next_];
      ++next_;
    }
    if (t > cur_.t && next_ < imu_.size()) {
      const imu::ImuSample u1 = imu::interpolate(cur_, imu_[next_], t);
      step(nav, cur_, u1);
      nav = imu::propagate_nominal(nav, cur_, u1, world_);
      cur_ = u1;
    }
    return nav;
  }

 private:
  const std::vector<imu::ImuSample>& imu_;
  imu::WorldModel world_;
  imu::ImuSample cur_;
  std::size_t next_ = 1;
};

double trace(const Eigen::MatrixXd& P) { return P.trace(); }

}  // namespace

void RunConfig::validate() const {
  const auto& f = filter;
  require(init_mode == "ground-truth", "init_mode must be 'ground-truth'");
  require(f.noise.sigma_px >= 0.0 && f.noise.focal > 0.0, "sigma_px must be >= 0 and focal > 0");
  require(f.imu_noise.sigma_g >= 0 && f.imu_noise.sigma_a >= 0 && f.imu_noise.sigma_wg >= 0 &&
              f.imu_noise.sigma_wa >= 0,
          "IMU noise densities must be non-negative");
  require(f.max_clones >= 2, "max_clones must be at least 2");
  require(f.update.geometry.theta_min > 0.0, "theta_min must be positive");
  require(f.update.min_track_len >= 2, "min_track_len must be at least 2");
  require(f.update.gate_confidence > 0.0 && f.update.gate_confidence < 1.0, "gate_confidence must be in (0, 1)");
  require(f.update.max_condition > 1.0, "max_condition must exceed 1");
  require(f.init.att > 0 && f.init.vel > 0 && f.init.pos > 0 && f.init.bg > 0 && f.init.ba > 0,
          "initial sigmas must be positive");
  require(std::abs(f.ext.q_c_b.norm() - 1.0) < 1e-6, "extrinsic quaternion must be unit norm");
  for (const auto* p : {&imu_file, &tracks_file, &groundtruth_file}) {
    if (p->empty()) throw Error(ErrorCode::ConfigError, "imu_file, tracks_file and groundtruth_file are required");
    std::ifstream in(*p);
    if (!in) throw Error(ErrorCode::IoError, "cannot read '" + p->string() + "'");
  }
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig c;
  auto& f = c.filter;
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"imu_file", [&](auto&, auto& v) { c.imu_file = path(v); }},
      {"tracks_file", [&](auto&, auto& v) { c.tracks_file = path(v); }},
      {"groundtruth_file", [&](auto&, auto& v) { c.groundtruth_file = path(v); }},
      {"output_dir", [&](auto&, auto& v) { c.output_dir = path(v); }},
      {"init_mode", [&](auto&, auto& v) { c.init_mode = v; }},
      {"sigma_px", [&](auto& k, auto& v) { f.noise.sigma_px = to_double(k, v); }},
      {"focal", [&](auto& k, auto& v) { f.noise.focal = to_double(k, v); }},
      {"sigma_g", [&](auto& k, auto& v) { f.imu_noise.sigma_g = to_double(k, v); }},
      {"sigma_a", [&](auto& k, auto& v) { f.imu_noise.sigma_a = to_double(k, v); }},
      {"sigma_wg", [&](auto& k, auto& v) { f.imu_noise.sigma_wg = to_double(k, v); }},
      {"sigma_wa", [&](auto& k, auto& v) { f.imu_noise.sigma_wa = to_double(k, v); }},
      {"gravity", [&](auto& k, auto& v) { f.world.gravity_w = to_vec3(k, v); }},
      {"earth_rate", [&](auto& k, auto& v) { f.world.earth_rate_w = to_vec3(k, v); }},
      {"extrinsic_q_c_b",
       [&](auto& k, auto& v) {
         const auto q = to_list(k, v, 4);
         f.ext.q_c_b = Quatd(q[0], q[1], q[2], q[3]);
       }},
      {"extrinsic_p_c_b", [&](auto& k, auto& v) { f.ext.p_c_b = to_vec3(k, v); }},
      {"max_clones", [&](auto& k, auto& v) { f.max_clones = to_size(k, v); }},
      {"theta_min", [&](auto& k, auto& v) { f.update.geometry.theta_min = to_double(k, v); }},
      {"depth_eps", [&](auto& k, auto& v) { f.update.geometry.depth_eps = to_double(k, v); }},
      {"min_track_len", [&](auto& k, auto& v) { f.update.min_track_len = to_size(k, v); }},
      {"gate_confidence", [&](auto& k, auto& v) { f.update.gate_confidence = to_double(k, v); }},
      {"max_condition", [&](auto& k, auto& v) { f.update.max_condition = to_double(k, v); }},
      {"noise_mode",
       [&](auto& k, auto& v) {
         if (v == "independent") {
           f.update.noise_mode = update::NoiseMode::Independent;
         } else if (v == "propagated") {
           f.update.noise_mode = update::NoiseMode::Propagated;
         } else {
           throw Error(ErrorCode::ConfigError, "config key '" + k + "' must be 'independent' or 'propagated'");
         }
       }},
      {"exact_theta_attitude",
       [&](auto& k, auto& v) {
         if (v == "true" || v == "1") {
           f.update.exact_theta_attitude = true;
         } else if (v == "false" || v == "0") {
           f.update.exact_theta_attitude = false;
         } else {
           throw Error(ErrorCode::ConfigError, "config key '" + k + "' must be true or false");
         }
       }},
      {"init_sigma_att", [&](auto& k, auto& v) { f.init.att = to_double(k, v); }},
      {"init_sigma_vel", [&](auto& k, auto& v) { f.init.vel = to_double(k, v); }},
      {"init_sigma_pos", [&](auto& k, auto& v) { f.init.pos = to_double(k, v); }},
      {"init_sigma_bg", [&](auto& k, auto& v) { f.init.bg = to_double(k, v); }},
      {"init_sigma_ba", [&](auto& k, auto& v) { f.init.ba = to_double(k, v); }},
  };

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(ErrorCode::ConfigError, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::ConfigError, "config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    it->second(key, value);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string to_config_text(const RunConfig& c) {
  const auto& f = c.filter;
  std::ostringstream o;
  o << "imu_file = " << c.imu_file.string() << '\n'
    << "tracks_file = " << c.tracks_file.string() << '\n'
    << "groundtruth_file = " << c.groundtruth_file.string() << '\n'
    << "output_dir = " << c.output_dir.string() << '\n'
    << "init_mode = " << c.init_mode << '\n'
    << "sigma_px = " << fmt(f.noise.sigma_px) << '\n'
    << "focal = " << fmt(f.noise.focal) << '\n'
    << "sigma_g = " << fmt(f.imu_noise.sigma_g) << '\n'
    << "sigma_a = " << fmt(f.imu_noise.sigma_a) << '\n'
    << "sigma_wg = " << fmt(f.imu_noise.sigma_wg) << '\n'
    << "sigma_wa = " << fmt(f.imu_noise.sigma_wa) << '\n'
    << "gravity = " << fmt(f.world.gravity_w) << '\n'
    << "earth_rate = " << fmt(f.world.earth_rate_w) << '\n'
    << "extrinsic_q_c_b = " << fmt(f.ext.q_c_b.w()) << ',' << fmt(f.ext.q_c_b.x()) << ',' << fmt(f.ext.q_c_b.y())
    << ',' << fmt(f.ext.q_c_b.z()) << '\n'
    << "extrinsic_p_c_b = " << fmt(f.ext.p_c_b) << '\n'
    << "max_clones = " << f.max_clones << '\n'
    << "theta_min = " << fmt(f.update.geometry.theta_min) << '\n'
    << "depth_eps = " << fmt(f.update.geometry.depth_eps) << '\n'
    << "min_track_len = " << f.update.min_track_len << '\n'
    << "gate_confidence = " << fmt(f.update.gate_confidence) << '\n'
    << "max_condition = " << fmt(f.update.max_condition) << '\n'
    << "noise_mode = " << (f.update.noise_mode == update::NoiseMode::Independent ? "independent" : "propagated")
    << '\n'
    << "exact_theta_attitude = " << (f.update.exact_theta_attitude ? "true" : "false") << '\n'
    << "init_sigma_att = " << fmt(f.init.att) << '\n'
    << "init_sigma_vel = " << fmt(f.init.vel) << '\n'
    << "init_sigma_pos = " << fmt(f.init.pos) << '\n'
    << "init_sigma_bg = " << fmt(f.init.bg) << '\n'
    << "init_sigma_ba = " << fmt(f.init.ba) << '\n';
  return o.str();
}

window::FilterState initial_state(const imu::NavState& nav, double t0, const InitSigmas& s) {
  window::FilterState state;
  state.t = t0;
  state.nav = nav;
  imu::Vec15 sd;
  sd << Vec3d::Constant(s.att), Vec3d::Constant(s.vel), Vec3d::Constant(s.pos), Vec3d::Constant(s.bg),
      Vec3d::Constant(s.ba);
  state.P = sd.array().square().matrix().asDiagonal();
  return state;
}

RunResult run_filter(const FilterOptions& opt, const imu::NavState& init, const std::vector<imu::ImuSample>& imu,
                     const std::vector<update::FeatureTrack>& tracks, const std::vector<io::FrameStamp>& frames,
                     const FrameCallback& on_frame) {
  RunResult result;
  Integrator integrator(imu, opt.world);
  window::FilterState state = initial_state(init, integrator.start(), opt.init);
  result.last_valid = state;

  // observations per frame id
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, update::TrackObservation>>> by_frame;
  for (const auto& track : tracks) {
    for (const auto& o : track.observations) by_frame[o.clone_id].emplace_back(track.feature_id, o);
  }
  std::map<std::int64_t, update::FeatureTrack> active;

  auto event = [&](double t, const std::string& kind, std::int64_t id, const std::string& reason, double value) {
    result.events.push_back({t, kind, id, reason, value});
  };

  try {
    for (const auto& frame : frames) {
      if (frame.t < integrator.start() || frame.t > integrator.end() || frame.t < state.t) {
        event(frame.t, "frame_skipped", -1, "outside_imu_span", static_cast<double>(frame.id));
        continue;
      }

      // propagate: accumulate the transition over the IMU steps, then apply
      // it to the joint covariance once
      imu::Mat15 Phi = imu::Mat15::Identity();
      imu::Mat15 Qd = imu::Mat15::Zero();
      state.nav = integrator.advance(
          state.nav, frame.t, [&](const imu::NavState& nav, const imu::ImuSample& u0, const imu::ImuSample& u1) {
            const imu::ImuSample mid = imu::interpolate(u0, u1, 0.5 * (u0.t + u1.t));
            const auto d = imu::discretize(imu::error_transition(nav, mid, opt.world), imu::noise_jacobian(nav),
                                           opt.imu_noise, u1.t - u0.t);
            Phi = d.Phi * Phi;
            Qd = d.Phi * Qd * d.Phi.transpose() + d.Qd;
          });
      imu::propagate_covariance_inplace(state.P, Phi, Qd);
      state.t = frame.t;

      state = window::augment(state, frame.t, opt.ext, opt.max_clones, frame.id);

      if (const auto it = by_frame.find(frame.id); it != by_frame.end()) {
        for (const auto& [feature, o] : it->second) {
          auto& track = active[feature];
          track.feature_id = feature;
          track.observations.push_back(o);
        }
      }

      // lost tracks, plus every track touching the oldest clone when the
      // window is full
      std::vector<update::FeatureTrack> candidates;
      const bool full = state.clones.size() >= opt.max_clones;
      const std::int64_t oldest = state.clones.front().clone_id;
      for (auto it = active.begin(); it != active.end();) {
        const auto& obs = it->second.observations;
        const bool lost = obs.back().clone_id != frame.id;
        if (lost || (full && obs.front().clone_id == oldest)) {
          candidates.push_back(std::move(it->second));
          it = active.erase(it);
        } else {
          ++it;
        }
      }

      if (!candidates.empty()) {
        std::vector<update::Rejection> rejected;
        try {
          const auto batch = update::build_batch(candidates, state, opt.noise, opt.update, &rejected);
          const auto gated = update::gate_batch(batch, state.P, opt.update.gate_confidence, &rejected);
          if (gated.empty()) {
            event(frame.t, "update_skipped", -1, "all_tracks_gated", static_cast<double>(batch.blocks.size()));
          } else {
            UpdateRecord rec;
            rec.t = frame.t;
            rec.candidates = candidates.size();
            rec.used = gated.blocks.size();
            rec.rows = gated.rows();
            rec.residual_norm = gated.r.norm();
            rec.trace_before = trace(state.P);
            state = update::ekf_update(state, gated, opt.update);
            rec.trace_after = trace(state.P);
            result.updates.push_back(rec);
          }
        } catch (const Error& e) {
          if (e.code() == ErrorCode::NoMeasurements) {
            event(frame.t, "update_skipped", -1, "no_measurements", static_cast<double>(candidates.size()));
          } else if (e.code() == ErrorCode::IllConditioned) {
            event(frame.t, "update_skipped", -1, "ill_conditioned", 0.0);
          } else {
            throw;
          }
        }
        for (const auto& r : rejected) event(frame.t, "track_rejected", r.feature_id, r.reason, r.value);
      }

      // clones no live track can reference carry no further information
      std::set<std::int64_t> referenced;
      for (const auto& [id, track] : active) {
        for (const auto& o : track.observations) referenced.insert(o.clone_id);
      }
      std::vector<std::int64_t> drop;
      for (const auto& c : state.clones) {
        if (!referenced.count(c.clone_id)) drop.push_back(c.clone_id);
      }
      if (!drop.empty()) state = window::marginalize(state, drop);
      if (state.clones.size() >= opt.max_clones) {
        const std::int64_t id = state.clones.front().clone_id;
        state = window::marginalize(state, std::span<const std::int64_t>(&id, 1));
        event(frame.t, "numeric", -1, "forced_marginalization", static_cast<double>(id));
      }

      imu::require_psd(state.P);
      result.poses.push_back({frame.t, state.nav.p_w, geom::canonical(state.nav.q_b_w)});
      result.last_valid = state;
      if (on_frame) on_frame(state);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::CovarianceCorrupt) throw;
    result.aborted = true;
    result.abort_message = e.what();
    event(state.t, "numeric", -1, std::string(to_string(e.code())), 0.0);
  }
  return result;
}

io::TrajectoryEstimate dead_reckon(const imu::NavState& init, const std::vector<imu::ImuSample>& imu,
                                   const std::vector<double>& times, const imu::WorldModel& world) {
  Integrator integrator(imu, world);
  io::TrajectoryEstimate out;
  imu::NavState nav = init;
  for (double t : times) {
    if (t < integrator.start() || t > integrator.end()) continue;
    nav = integrator.advance(nav, t, [](const auto&, const auto&, const auto&) {});
    out.push_back({t, nav.p_w, geom::canonical(nav.q_b_w)});
  }
  return out;
}

imu::NavState nav_from_groundtruth(const std::vector<io::GroundTruthSample>& gt, double t) {
  if (gt.empty()) throw Error(ErrorCode::EmptyStream, "no ground truth");
  if (t < gt.front().t || t > gt.back().t) {
    throw Error(ErrorCode::TimestampOrder, "initialization time outside the ground-truth span");
  }
  auto hi = std::lower_bound(gt.begin(), gt.end(), t, [](const auto& s, double v) { return s.t < v; });
  if (hi == gt.begin()) ++hi;
  if (hi == gt.end()) --hi;
  const auto lo = hi - 1;
  const double a = (hi->t > lo->t) ? (t - lo->t) / (hi->t - lo->t) : 0.0;

  imu::NavState nav;
  nav.p_w = (1.0 - a) * lo->p + a * hi->p;
  nav.q_b_w = geom::canonical(lo->q.slerp(a, hi->q));
  if (lo->v && hi->v) {
    nav.v_w = (1.0 - a) * *lo->v + a * *hi->v;
  } else if (gt.size() >= 2) {
    nav.v_w = (hi->p - lo->p) / (hi->t - lo->t);
  }
  return nav;
}

void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<DiagnosticEvent>& events) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << "timestamp_s,kind,feature_id,reason,value\n" << std::setprecision(17);
  for (const auto& e : events) {
    out << e.t << ',' << e.kind << ',' << e.feature_id << ',' << e.reason << ',' << e.value << '\n';
  }
}

void write_updates_csv(const std::filesystem::path& path, const std::vector<UpdateRecord>& updates) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << "timestamp_s,candidates,used,rows,residual_norm,trace_before,trace_after\n" << std::setprecision(17);
  for (const auto& u : updates) {
    out << u.t << ',' << u.candidates << ',' << u.used << ',' << u.rows << ',' << u.residual_norm << ','
        << u.trace_before << ',' << u.trace_after << '\n';
  }
}

void write_state_dump(const std::filesystem::path& path, const window::FilterState& s) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  const Eigen::IOFormat row(Eigen::FullPrecision, Eigen::DontAlignCols, " ", "\n");
  out << std::setprecision(17) << "t " << s.t << '\n'
      << "q_b_w " << s.nav.q_b_w.w() << ' ' << s.nav.q_b_w.x() << ' ' << s.nav.q_b_w.y() << ' ' << s.nav.q_b_w.z()
      << '\n'
      << "v_w " << s.nav.v_w.transpose().format(row) << '\n'
      << "p_w " << s.nav.p_w.transpose().format(row) << '\n'
      << "b_g " << s.nav.b_g.transpose().format(row) << '\n'
      << "b_a " << s.nav.b_a.transpose().format(row) << '\n';
  for (const auto& c : s.clones) {
    out << "clone " << c.clone_id << ' ' << c.t << ' ' << c.q_c_w.w() << ' ' << c.q_c_w.x() << ' ' << c.q_c_w.y()
        << ' ' << c.q_c_w.z() << ' ' << c.p_c_w.transpose().format(row) << '\n';
  }
  out << "P " << s.P.rows() << '\n' << s.P.format(row) << '\n';
}

}  // namespace pomsckf::pipeline
