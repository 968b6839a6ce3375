#include "pomsckf/sim.hpp"

#include "pomsckf/error.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace pomsckf::sim {

namespace {

constexpr double kPi = std::numbers::pi;

// 5-point Gauss-Legendre nodes/weights on [-1, 1]
constexpr std::array<double, 5> kGlNodes{-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                         0.9061798459386640};
constexpr std::array<double, 5> kGlWeights{0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                           0.4786286704993665, 0.2369268850561891};

template <typename F>
Vec3d gauss_legendre(F&& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  Vec3d acc = Vec3d::Zero();
  for (std::size_t q = 0; q < kGlNodes.size(); ++q) acc += kGlWeights[q] * f(mid + half * kGlNodes[q]);
  return half * acc;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Quatd yaw_quat(double psi) { return geom::canonical(Quatd(std::cos(psi / 2), 0.0, 0.0, std::sin(psi / 2))); }

}  // namespace

TrajectoryKind parse_kind(const std::string& name) {
  if (name == "circle") return TrajectoryKind::Circle;
  if (name == "figure-eight") return TrajectoryKind::FigureEight;
  if (name == "straight-with-turns") return TrajectoryKind::StraightWithTurns;
  throw Error(ErrorCode::ConfigError, "unknown trajectory kind '" + name + "'");
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::FigureEight: return "figure-eight";
    case TrajectoryKind::StraightWithTurns: return "straight-with-turns";
  }
  return "circle";
}

void TrajectorySpec::validate() const {
  if (!(imu_rate > 0.0) || !(cam_rate > 0.0) || imu_rate < cam_rate) {
    throw Error(ErrorCode::ConfigError, "rates must be positive with imu_rate >= cam_rate");
  }
  if (!(duration > 0.0) || !(extent > 0.0) || !(speed > 0.0)) {
    throw Error(ErrorCode::ConfigError, "duration, extent and speed must be positive");
  }
  if (kind == TrajectoryKind::StraightWithTurns && !(turn_duration > 0.0)) {
    throw Error(ErrorCode::ConfigError, "turn_duration must be positive");
  }
}

Trajectory::Trajectory(const TrajectorySpec& spec) : spec_(spec) {
  spec_.validate();
  switch (spec_.kind) {
    case TrajectoryKind::Circle:
      omega_ = spec_.speed / spec_.extent;
      break;
    case TrajectoryKind::FigureEight: {
      // path length of (A sin s, A/2 sin 2s) over one period, Simpson rule
      const int n = 4000;
      const double h = 2 * kPi / n;
      double sum = 0.0;
      for (int q = 0; q <= n; ++q) {
        const double s = q * h;
        const double g = spec_.extent * std::hypot(std::cos(s), std::cos(2 * s));
        sum += g * ((q == 0 || q == n) ? 1.0 : (q % 2 ? 4.0 : 2.0));
      }
      const double length = sum * h / 3.0;
      omega_ = 2 * kPi * spec_.speed / length;
      break;
    }
    case TrajectoryKind::StraightWithTurns: {
      const double end = spec_.duration + 2.0;
      const auto n = static_cast<std::size_t>(std::ceil(end / grid_step_)) + 1;
      grid_.resize(n);
      grid_[0] = Vec3d::Zero();
      const auto velocity = [this](double t) {
        const double psi = heading(t).psi;
        return Vec3d(spec_.speed * std::cos(psi), spec_.speed * std::sin(psi), 0.0);
      };
      for (std::size_t q = 1; q < n; ++q) {
        grid_[q] = grid_[q - 1] + gauss_legendre(velocity, (q - 1) * grid_step_, q * grid_step_);
      }
      break;
    }
  }
}

double Trajectory::period() const {
  if (spec_.kind == TrajectoryKind::StraightWithTurns) {
    return 4.0 * (spec_.extent / spec_.speed + spec_.turn_duration);
  }
  return 2 * kPi / omega_;
}

Trajectory::Heading Trajectory::heading(double t) const {
  switch (spec_.kind) {
    case TrajectoryKind::Circle:
      return {omega_ * t + kPi / 2, omega_, 0.0};
    case TrajectoryKind::FigureEight: {
      const double A = spec_.extent, w = omega_;
      const double xd = A * w * std::cos(w * t), yd = A * w * std::cos(2 * w * t);
      const double xdd = -A * w * w * std::sin(w * t), ydd = -2 * A * w * w * std::sin(2 * w * t);
      return {std::atan2(yd, xd), (xd * ydd - yd * xdd) / (xd * xd + yd * yd), 0.0};
    }
    case TrajectoryKind::StraightWithTurns: {
      const double leg = spec_.extent / spec_.speed;
      const double T = spec_.turn_duration;
      const double cycle = leg + T;
      const double turns = std::floor(t / cycle);
      const double tau = t - turns * cycle;
      const double step = kPi / 2;
      double psi = turns * step, rate = 0.0, accel = 0.0;
      if (tau > leg) {
        const double u = tau - leg;
        psi += step / T * (u - T / (2 * kPi) * std::sin(2 * kPi * u / T));
        rate = step / T * (1.0 - std::cos(2 * kPi * u / T));
        accel = step / T * (2 * kPi / T) * std::sin(2 * kPi * u / T);
      }
      return {psi, rate, accel};
    }
  }
  return {0.0, 0.0, 0.0};
}

Vec3d Trajectory::planar_position(double t) const {
  switch (spec_.kind) {
    case TrajectoryKind::Circle:
      return {spec_.extent * std::cos(omega_ * t), spec_.extent * std::sin(omega_ * t), 0.0};
    case TrajectoryKind::FigureEight:
      return {spec_.extent * std::sin(omega_ * t), 0.5 * spec_.extent * std::sin(2 * omega_ * t), 0.0};
    case TrajectoryKind::StraightWithTurns: {
      const auto q = std::min(static_cast<std::size_t>(std::max(t, 0.0) / grid_step_), grid_.size() - 1);
      const double t0 = q * grid_step_;
      if (t <= t0) return grid_[q];
      const auto velocity = [this](double s) {
        const double psi = heading(s).psi;
        return Vec3d(spec_.speed * std::cos(psi), spec_.speed * std::sin(psi), 0.0);
      };
      return grid_[q] + gauss_legendre(velocity, t0, t);
    }
  }
  return Vec3d::Zero();
}

TruthSample Trajectory::evaluate(double t) const {
  TruthSample s;
  s.t = t;
  const Heading h = heading(t);
  s.q_b_w = yaw_quat(h.psi);
  s.omega_b = Vec3d(0.0, 0.0, h.rate);
  s.p_w = planar_position(t);

  switch (spec_.kind) {
    case TrajectoryKind::Circle: {
      const double R = spec_.extent, w = omega_;
      s.v_w = Vec3d(-R * w * std::sin(w * t), R * w * std::cos(w * t), 0.0);
      s.a_w = Vec3d(-R * w * w * std::cos(w * t), -R * w * w * std::sin(w * t), 0.0);
      break;
    }
    case TrajectoryKind::FigureEight: {
      const double A = spec_.extent, w = omega_;
      s.v_w = Vec3d(A * w * std::cos(w * t), A * w * std::cos(2 * w * t), 0.0);
      s.a_w = Vec3d(-A * w * w * std::sin(w * t), -2 * A * w * w * std::sin(2 * w * t), 0.0);
      break;
    }
    case TrajectoryKind::StraightWithTurns: {
      const double v = spec_.speed;
      s.v_w = Vec3d(v * std::cos(h.psi), v * std::sin(h.psi), 0.0);
      s.a_w = Vec3d(-v * h.rate * std::sin(h.psi), v * h.rate * std::cos(h.psi), 0.0);
      break;
    }
  }

  if (spec_.z_amplitude != 0.0) {
    const double wz = 2 * kPi / spec_.z_period;
    s.p_w.z() += spec_.z_amplitude * std::sin(wz * t);
    s.v_w.z() += spec_.z_amplitude * wz * std::cos(wz * t);
    s.a_w.z() += -spec_.z_amplitude * wz * wz * std::sin(wz * t);
  }
  return s;
}

std::vector<TruthSample> gen_trajectory(const TrajectorySpec& spec) {
  const Trajectory traj(spec);
  const auto n = static_cast<std::size_t>(std::floor(spec.duration * spec.imu_rate + 1e-9)) + 1;
  std::vector<TruthSample> out;
  out.reserve(n);
  for (std::size_t q = 0; q < n; ++q) out.push_back(traj.evaluate(static_cast<double>(q) / spec.imu_rate));
  return out;
}

ImuStream gen_imu(const std::vector<TruthSample>& truth, const imu::WorldModel& world, const imu::ImuNoiseSpec& noise,
                  std::uint64_t seed, const BiasSpec& bias) {
  auto rng = make_rng(seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto draw = [&]() { return Vec3d(normal(rng), normal(rng), normal(rng)); };

  ImuStream out;
  out.samples.reserve(truth.size());
  Vec3d bg = bias.sigma_bg0 * draw();
  Vec3d ba = bias.sigma_ba0 * draw();
  for (std::size_t q = 0; q < truth.size(); ++q) {
    const TruthSample& s = truth[q];
    const double dt = q + 1 < truth.size() ? truth[q + 1].t - s.t : (q > 0 ? s.t - truth[q - 1].t : 1.0);
    const geom::Mat3d R_w_b = geom::quat_to_rot(s.q_b_w).transpose();
    imu::ImuSample u;
    u.t = s.t;
    u.omega = s.omega_b + R_w_b * world.earth_rate_w + bg + noise.sigma_g / std::sqrt(dt) * draw();
    u.f = R_w_b * (s.a_w - world.gravity_w + 2.0 * world.earth_rate_w.cross(s.v_w)) + ba +
          noise.sigma_a / std::sqrt(dt) * draw();
    out.samples.push_back(u);
    out.b_g.push_back(bg);
    out.b_a.push_back(ba);
    bg += noise.sigma_wg * std::sqrt(dt) * draw();
    ba += noise.sigma_wa * std::sqrt(dt) * draw();
  }
  return out;
}

CameraSpec default_camera() {
  CameraSpec cam;
  geom::Mat3d R_c_b;
  // columns: camera x, y, z axes in the body frame (z along body -y, y down)
  R_c_b << -1.0, 0.0, 0.0,
           0.0, 0.0, -1.0,
           0.0, -1.0, 0.0;
  cam.ext.q_c_b = geom::rot_to_quat(R_c_b);
  cam.ext.p_c_b = Vec3d(0.05, -0.02, 0.01);
  cam.fov_deg = 90.0;
  return cam;
}

namespace {

struct CameraAt {
  geom::Mat3d R_c_w;
  Vec3d center;
};

CameraAt camera_at(const TruthSample& s, const CameraSpec& cam) {
  const geom::Mat3d R_b_w = geom::quat_to_rot(s.q_b_w);
  return {R_b_w * geom::quat_to_rot(cam.ext.q_c_b), s.p_w + R_b_w * cam.ext.p_c_b};
}

}  // namespace

std::vector<Landmark> gen_points(const Trajectory& traj, const CameraSpec& cam, const PointSpec& spec,
                                 std::uint64_t seed) {
  if (!(spec.z_min > 0.0) || spec.z_max < spec.z_min) {
    throw Error(ErrorCode::ConfigError, "landmark depth range must satisfy 0 < z_min <= z_max");
  }
  auto rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double duration = traj.spec().duration;
  const auto count = static_cast<std::size_t>(std::ceil(spec.points_per_second * duration));
  const double cos_cap = std::cos(0.8 * 0.5 * cam.fov_deg * kPi / 180.0);

  std::vector<Landmark> out;
  out.reserve(count);
  for (std::size_t q = 0; q < count; ++q) {
    const double t = duration * unit(rng);
    const double ct = 1.0 - (1.0 - cos_cap) * unit(rng);
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const double az = 2 * kPi * unit(rng);
    const double depth = spec.z_min + (spec.z_max - spec.z_min) * unit(rng);
    const Vec3d dir(st * std::cos(az), st * std::sin(az), ct);
    const CameraAt c = camera_at(traj.evaluate(t), cam);
    out.push_back({static_cast<std::int64_t>(q), c.center + c.R_c_w * (dir / dir.z() * depth)});
  }
  return out;
}

std::vector<Frame> gen_frames(const TrajectorySpec& spec) {
  const auto n = static_cast<std::size_t>(std::floor(spec.duration * spec.cam_rate + 1e-9)) + 1;
  std::vector<Frame> out;
  out.reserve(n);
  for (std::size_t q = 0; q < n; ++q) out.push_back({static_cast<std::int64_t>(q), q / spec.cam_rate});
  return out;
}

std::vector<update::FeatureTrack> gen_tracks(const Trajectory& traj, const std::vector<Frame>& frames,
                                             const std::vector<Landmark>& points, const CameraSpec& cam,
                                             double sigma_n, std::uint64_t seed, std::size_t max_track_len) {
  auto rng = make_rng(seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double cos_half = std::cos(0.5 * cam.fov_deg * kPi / 180.0);

  std::vector<CameraAt> cams;
  cams.reserve(frames.size());
  for (const auto& f : frames) cams.push_back(camera_at(traj.evaluate(f.t), cam));

  std::vector<update::FeatureTrack> out;
  std::int64_t next_id = 0;
  for (const Landmark& lm : points) {
    update::FeatureTrack current;
    const auto close = [&]() {
      if (current.observations.size() >= 2) {
        current.feature_id = next_id++;
        out.push_back(std::move(current));
      }
      current = {};
    };
    for (std::size_t q = 0; q < frames.size(); ++q) {
      const Vec3d pc = cams[q].R_c_w.transpose() * (lm.p_w - cams[q].center);
      const bool visible = pc.z() > 1e-3 && pc.z() >= cos_half * pc.norm();
      if (!visible) {
        close();
        continue;
      }
      update::TrackObservation o;
      o.clone_id = frames[q].id;
      o.t = frames[q].t;
      o.xy = pc.head<2>() / pc.z();
      if (sigma_n > 0.0) o.xy += sigma_n * geom::Vec2d(normal(rng), normal(rng));
      current.observations.push_back(o);
      if (current.observations.size() >= max_track_len) close();
    }
    close();
  }
  return out;
}

SimOutput simulate(const SimConfig& config) {
  SimOutput out;
  out.config = config;
  const Trajectory traj(config.trajectory);
  out.truth = gen_trajectory(config.trajectory);
  out.imu = gen_imu(out.truth, config.world, config.imu_noise, config.seed, config.bias);
  out.frames = gen_frames(config.trajectory);
  out.landmarks = gen_points(traj, config.camera, config.points, config.seed);
  out.tracks = gen_tracks(traj, out.frames, out.landmarks, config.camera, config.pixel_noise.sigma_n(), config.seed,
                          config.max_track_len);
  return out;
}

imu::NavState nav_from_truth(const TruthSample& s) {
  imu::NavState nav;
  nav.q_b_w = s.q_b_w;
  nav.p_w = s.p_w;
  nav.v_w = s.v_w;
  return nav;
}

}  // namespace pomsckf::sim
