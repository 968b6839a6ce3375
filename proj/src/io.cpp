#include "pomsckf/io.hpp"

#include "pomsckf/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pomsckf::io {

namespace {

std::ifstream open_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  return out;
}

/// Calls fn(fields, where) for every data line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, char sep, Fn&& fn) {
  auto in = open_read(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    fn(split(line, sep), path.filename().string() + ":" + std::to_string(lineno));
  }
}

void expect_fields(const std::vector<std::string>& f, std::size_t n, const std::string& where) {
  if (f.size() != n) {
    throw Error(ErrorCode::ParseError,
                where + ": expected " + std::to_string(n) + " fields, got " + std::to_string(f.size()));
  }
}

std::string fmt17(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

std::int64_t seconds_to_ns(double t) { return static_cast<std::int64_t>(std::llround(t * 1e9)); }
double ns_to_seconds(std::int64_t ns) { return static_cast<double>(ns) * 1e-9; }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  if (sep == ' ') {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  }
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& token, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError, where + ": bad number '" + token + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& token, const std::string& where) {
  std::int64_t v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw Error(ErrorCode::ParseError, where + ": bad integer '" + token + "'");
  }
  return v;
}

std::vector<imu::ImuSample> load_imu_csv(const std::filesystem::path& path) {
  std::vector<imu::ImuSample> out;
  std::int64_t last_ns = 0;
  for_each_record(path, ',', [&](const std::vector<std::string>& f, const std::string& where) {
    expect_fields(f, 7, where);
    const std::int64_t ns = parse_int(f[0], where);
    if (!out.empty() && ns <= last_ns) throw Error(ErrorCode::TimestampOrder, where + ": timestamp not increasing");
    last_ns = ns;
    imu::ImuSample u;
    u.t = ns_to_seconds(ns);
    for (int a = 0; a < 3; ++a) {
      u.omega(a) = parse_double(f[1 + a], where);
      u.f(a) = parse_double(f[4 + a], where);
    }
    out.push_back(u);
  });
  if (out.empty()) throw Error(ErrorCode::EmptyStream, path.string() + " has no IMU samples");
  return out;
}

void write_imu_csv(const std::filesystem::path& path, const std::vector<imu::ImuSample>& samples) {
  auto out = open_write(path);
  out << "#timestamp_ns,wx,wy,wz,ax,ay,az\n";
  for (const auto& u : samples) {
    out << seconds_to_ns(u.t);
    for (int a = 0; a < 3; ++a) out << ',' << fmt17(u.omega(a));
    for (int a = 0; a < 3; ++a) out << ',' << fmt17(u.f(a));
    out << '\n';
  }
}

TrackSet load_tracks_csv(const std::filesystem::path& path) {
  std::map<std::int64_t, std::map<std::int64_t, update::TrackObservation>> grouped;
  std::map<std::int64_t, double> frames;
  for_each_record(path, ',', [&](const std::vector<std::string>& f, const std::string& where) {
    expect_fields(f, 5, where);
    const std::int64_t feature = parse_int(f[0], where);
    const std::int64_t frame = parse_int(f[1], where);
    const double t = ns_to_seconds(parse_int(f[2], where));
    update::TrackObservation o;
    o.clone_id = frame;
    o.t = t;
    o.xy = geom::Vec2d(parse_double(f[3], where), parse_double(f[4], where));
    auto& track = grouped[feature];
    if (!track.emplace(frame, o).second) {
      throw Error(ErrorCode::DuplicateObservation,
                  where + ": feature " + std::to_string(feature) + " already observed in frame " + std::to_string(frame));
    }
    const auto [it, inserted] = frames.emplace(frame, t);
    if (!inserted && it->second != t) {
      throw Error(ErrorCode::ParseError, where + ": frame " + std::to_string(frame) + " has conflicting timestamps");
    }
  });

  TrackSet set;
  for (auto& [id, obs] : grouped) {
    update::FeatureTrack track;
    track.feature_id = id;
    for (auto& [frame, o] : obs) track.observations.push_back(o);
    set.tracks.push_back(std::move(track));
  }
  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& [id, t] : frames) {
    if (!(t > last_t)) throw Error(ErrorCode::TimestampOrder, "frame " + std::to_string(id) + " out of time order");
    last_t = t;
    set.frames.push_back({id, t});
  }
  return set;
}

void write_tracks_csv(const std::filesystem::path& path, const std::vector<update::FeatureTrack>& tracks) {
  auto out = open_write(path);
  out << "#feature_id,frame_id,timestamp_ns,x_norm,y_norm\n";
  for (const auto& track : tracks) {
    for (const auto& o : track.observations) {
      out << track.feature_id << ',' << o.clone_id << ',' << seconds_to_ns(o.t) << ',' << fmt17(o.xy.x()) << ','
          << fmt17(o.xy.y()) << '\n';
    }
  }
}

std::vector<GroundTruthSample> load_groundtruth_csv(const std::filesystem::path& path) {
  std::vector<GroundTruthSample> out;
  for_each_record(path, ',', [&](const std::vector<std::string>& f, const std::string& where) {
    // EuRoC ground truth carries biases after velocity; extra columns ignored
    if (f.size() < 8) throw Error(ErrorCode::ParseError, where + ": expected at least 8 fields");
    GroundTruthSample s;
    s.t = ns_to_seconds(parse_int(f[0], where));
    s.p = Vec3d(parse_double(f[1], where), parse_double(f[2], where), parse_double(f[3], where));
    s.q = geom::canonical(Quatd(parse_double(f[4], where), parse_double(f[5], where), parse_double(f[6], where),
                                parse_double(f[7], where)));
    if (f.size() >= 11) {
      s.v = Vec3d(parse_double(f[8], where), parse_double(f[9], where), parse_double(f[10], where));
    }
    if (!out.empty() && !(s.t > out.back().t)) {
      throw Error(ErrorCode::TimestampOrder, where + ": timestamp not increasing");
    }
    out.push_back(s);
  });
  if (out.empty()) throw Error(ErrorCode::EmptyStream, path.string() + " has no ground-truth rows");
  return out;
}

void write_groundtruth_csv(const std::filesystem::path& path, const std::vector<GroundTruthSample>& samples) {
  auto out = open_write(path);
  out << "#timestamp_ns,px,py,pz,qw,qx,qy,qz,vx,vy,vz\n";
  for (const auto& s : samples) {
    out << seconds_to_ns(s.t) << ',' << fmt17(s.p.x()) << ',' << fmt17(s.p.y()) << ',' << fmt17(s.p.z()) << ','
        << fmt17(s.q.w()) << ',' << fmt17(s.q.x()) << ',' << fmt17(s.q.y()) << ',' << fmt17(s.q.z());
    if (s.v) out << ',' << fmt17(s.v->x()) << ',' << fmt17(s.v->y()) << ',' << fmt17(s.v->z());
    out << '\n';
  }
}

TrajectoryEstimate load_tum(const std::filesystem::path& path) {
  TrajectoryEstimate out;
  for_each_record(path, ' ', [&](const std::vector<std::string>& f, const std::string& where) {
    expect_fields(f, 8, where);
    StampedPose p;
    p.t = parse_double(f[0], where);
    p.p = Vec3d(parse_double(f[1], where), parse_double(f[2], where), parse_double(f[3], where));
    p.q = geom::canonical(Quatd(parse_double(f[7], where), parse_double(f[4], where), parse_double(f[5], where),
                                parse_double(f[6], where)));
    if (!out.empty() && !(p.t > out.back().t)) {
      throw Error(ErrorCode::TimestampOrder, where + ": timestamp not increasing");
    }
    out.push_back(p);
  });
  return out;
}

void write_tum(const std::filesystem::path& path, const TrajectoryEstimate& poses,
               const std::vector<std::string>& header) {
  auto out = open_write(path);
  for (const auto& h : header) out << "# " << h << '\n';
  for (const auto& p : poses) {
    out << fmt17(p.t) << ' ' << fmt17(p.p.x()) << ' ' << fmt17(p.p.y()) << ' ' << fmt17(p.p.z()) << ' '
        << fmt17(p.q.x()) << ' ' << fmt17(p.q.y()) << ' ' << fmt17(p.q.z()) << ' ' << fmt17(p.q.w()) << '\n';
  }
}

}  // namespace pomsckf::io
