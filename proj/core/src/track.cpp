#include "racelab/track.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace racelab {

extern const char kTrackBData[];

namespace {

constexpr double kCellSize = 20.0;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc{} && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

struct Nearest {
  double dist = std::numeric_limits<double>::infinity();
  double station = std::numeric_limits<double>::infinity();
  std::size_t seg = 0;
  double t = 0.0;
};

}  // namespace

Track::Track(std::string name, double half_width, std::vector<Vec2> waypoints)
    : name_(std::move(name)), half_width_(half_width), waypoints_(std::move(waypoints)) {
  if (waypoints_.size() < 3) throw ParseError("track '" + name_ + "': need at least 3 waypoints");
  if (!(half_width_ > 0.0) || !std::isfinite(half_width_))
    throw ParseError("track '" + name_ + "': half_width must be positive");
  const std::size_t n = waypoints_.size();
  cum_length_.resize(n + 1);
  cum_length_[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = waypoints_[i];
    const Vec2 b = waypoints_[(i + 1) % n];
    if (!std::isfinite(a.x) || !std::isfinite(a.y))
      throw ParseError("track '" + name_ + "': non-finite waypoint " + std::to_string(i));
    const double len = norm(b - a);
    if (!(len > 0.0))
      throw ParseError("track '" + name_ + "': zero-length segment at waypoint " + std::to_string(i));
    cum_length_[i + 1] = cum_length_[i] + len;
  }
  build_index();
}

void Track::build_index() {
  double minx = waypoints_[0].x, maxx = minx, miny = waypoints_[0].y, maxy = miny;
  for (const Vec2& p : waypoints_) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  cell_ = kCellSize;
  origin_ = {minx, miny};
  cols_ = static_cast<int>(std::floor((maxx - minx) / cell_)) + 1;
  rows_ = static_cast<int>(std::floor((maxy - miny) / cell_)) + 1;
  cells_.assign(static_cast<std::size_t>(cols_) * rows_, {});
  const std::size_t n = waypoints_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = waypoints_[i];
    const Vec2 b = waypoints_[(i + 1) % n];
    const int c0 = static_cast<int>(std::floor((std::min(a.x, b.x) - origin_.x) / cell_));
    const int c1 = static_cast<int>(std::floor((std::max(a.x, b.x) - origin_.x) / cell_));
    const int r0 = static_cast<int>(std::floor((std::min(a.y, b.y) - origin_.y) / cell_));
    const int r1 = static_cast<int>(std::floor((std::max(a.y, b.y) - origin_.y) / cell_));
    for (int r = std::max(r0, 0); r <= std::min(r1, rows_ - 1); ++r)
      for (int c = std::max(c0, 0); c <= std::min(c1, cols_ - 1); ++c)
        cells_[static_cast<std::size_t>(r) * cols_ + c].push_back(static_cast<int>(i));
  }
}

double Track::wrap(double station) const {
  const double len = total_length();
  double s = std::fmod(station, len);
  if (s < 0.0) s += len;
  if (s >= len) s = 0.0;
  return s;
}

std::size_t Track::segment_at(double station) const {
  const double s = wrap(station);
  auto it = std::upper_bound(cum_length_.begin(), cum_length_.end(), s);
  const auto idx = static_cast<std::size_t>(std::distance(cum_length_.begin(), it));
  return std::min(idx == 0 ? 0 : idx - 1, waypoints_.size() - 1);
}

Projection Track::project(Vec2 p) const {
  const std::size_t n = waypoints_.size();
  Nearest best;
  auto consider = [&](std::size_t i) {
    const Vec2 a = waypoints_[i];
    const Vec2 d = waypoints_[(i + 1) % n] - a;
    const double seg_len = cum_length_[i + 1] - cum_length_[i];
    double t = dot(p - a, d) / (seg_len * seg_len);
    t = clamp(t, 0.0, 1.0);
    const double dist = norm(p - (a + t * d));
    double station = cum_length_[i] + t * seg_len;
    if (station >= total_length()) station = 0.0;
    if (dist < best.dist || (dist == best.dist && station < best.station)) {
      best = {dist, station, i, t};
    }
  };

  const int pc = static_cast<int>(std::floor((p.x - origin_.x) / cell_));
  const int pr = static_cast<int>(std::floor((p.y - origin_.y) / cell_));
  const bool inside = pc >= 0 && pc < cols_ && pr >= 0 && pr < rows_;
  bool done = false;
  if (inside) {
    const int max_ring = std::max(cols_, rows_);
    for (int ring = 0; ring <= max_ring && !done; ++ring) {
      for (int r = pr - ring; r <= pr + ring; ++r) {
        if (r < 0 || r >= rows_) continue;
        const bool edge_row = (r == pr - ring || r == pr + ring);
        for (int c = pc - ring; c <= pc + ring; c += (edge_row ? 1 : 2 * ring)) {
          if (c >= 0 && c < cols_)
            for (int seg : cells_[static_cast<std::size_t>(r) * cols_ + c]) consider(static_cast<std::size_t>(seg));
          if (ring == 0) break;
        }
      }
      // Every unvisited cell is at least ring * cell_ away.
      if (best.dist < ring * cell_) done = true;
    }
  }
  if (!done) {
    best = Nearest{};
    for (std::size_t i = 0; i < n; ++i) consider(i);
  }

  const Vec2 a = waypoints_[best.seg];
  const Vec2 b = waypoints_[(best.seg + 1) % n];
  Vec2 tangent = b - a;
  if (best.t <= 0.0 || best.t >= 1.0) {
    // Closest point is a vertex: use the bisector of the adjacent directions.
    const std::size_t v = best.t <= 0.0 ? best.seg : (best.seg + 1) % n;
    const Vec2 prev = waypoints_[v] - waypoints_[(v + n - 1) % n];
    const Vec2 next = waypoints_[(v + 1) % n] - waypoints_[v];
    tangent = (1.0 / norm(prev)) * prev + (1.0 / norm(next)) * next;
    if (norm(tangent) == 0.0) tangent = next;
  }
  const Vec2 unit = (1.0 / norm(tangent)) * tangent;
  const Vec2 foot = a + best.t * (b - a);
  const double side = cross(unit, p - foot);
  Projection out;
  out.station = best.station;
  out.lateral = side >= 0.0 ? best.dist : -best.dist;
  out.tangent_heading = std::atan2(unit.y, unit.x);
  return out;
}

Pose Track::point_at(double station, double lateral) const {
  const double s = wrap(station);
  const std::size_t i = segment_at(s);
  const std::size_t n = waypoints_.size();
  const Vec2 a = waypoints_[i];
  const Vec2 d = waypoints_[(i + 1) % n] - a;
  const double seg_len = cum_length_[i + 1] - cum_length_[i];
  const double t = (s - cum_length_[i]) / seg_len;
  const Vec2 unit = (1.0 / seg_len) * d;
  const Vec2 left{-unit.y, unit.x};
  const Vec2 pos = a + t * d + lateral * left;
  return {pos.x, pos.y, std::atan2(unit.y, unit.x)};
}

double Track::curvature_at(double station) const {
  const Pose pa = point_at(station - kCurvatureSpacing, 0.0);
  const Pose pb = point_at(station, 0.0);
  const Pose pc = point_at(station + kCurvatureSpacing, 0.0);
  const Vec2 a{pa.x, pa.y}, b{pb.x, pb.y}, c{pc.x, pc.y};
  const double ab = norm(b - a), bc = norm(c - b), ac = norm(c - a);
  const double denom = ab * bc * ac;
  if (denom <= 0.0) return 0.0;
  return 2.0 * cross(b - a, c - b) / denom;
}

Track parse_track(std::string_view text, std::string_view origin) {
  std::string name;
  double half_width = 0.0;
  std::vector<Vec2> pts;
  int lineno = 0;
  int header = 0;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(std::string(origin) + ":" + std::to_string(lineno) + ": " + what);
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (header == 0) {
      if (toks[0] != "name" || toks.size() < 2) throw fail("expected 'name <text>'");
      const auto start = line.find(toks[1]);
      name = std::string(line.substr(start));
      while (!name.empty() && (name.back() == ' ' || name.back() == '\r' || name.back() == '\t')) name.pop_back();
      ++header;
    } else if (header == 1) {
      if (toks.size() != 2 || toks[0] != "half_width" || !parse_double(toks[1], half_width))
        throw fail("expected 'half_width <meters>'");
      if (!(half_width > 0.0)) throw fail("half_width must be positive");
      ++header;
    } else {
      Vec2 p;
      if (toks.size() != 2 || !parse_double(toks[0], p.x) || !parse_double(toks[1], p.y))
        throw fail("expected 'x y' waypoint");
      if (!pts.empty() && pts.back() == p) throw fail("zero-length segment (duplicate waypoint)");
      pts.push_back(p);
    }
  }
  if (header < 2) throw ParseError(std::string(origin) + ": missing header");
  if (pts.size() < 3) throw ParseError(std::string(origin) + ": need at least 3 waypoints");
  if (pts.front() == pts.back())
    throw ParseError(std::string(origin) + ": zero-length closing segment (last waypoint repeats the first)");
  return Track(std::move(name), half_width, std::move(pts));
}

Track load_track(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open track file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_track(ss.str(), path.string());
}

std::string format_track(const Track& track) {
  std::string out = "name " + track.name() + "\nhalf_width " + format_double(track.half_width()) + "\n";
  for (const Vec2& p : track.waypoints()) out += format_double(p.x) + " " + format_double(p.y) + "\n";
  return out;
}

void save_track(const Track& track, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write track file " + path.string());
  out << format_track(track);
}

Track make_track_a() {
  constexpr double kStraight = 800.0;
  constexpr double kRadius = 150.0;
  constexpr int kArcPoints = 960;
  constexpr double kStep = 10.0;
  const double half = kStraight / 2.0;
  std::vector<Vec2> pts;
  for (double x = 0.0; x < half; x += kStep) pts.push_back({x, -kRadius});
  for (int i = 0; i < kArcPoints; ++i) {
    const double ang = -kPi / 2.0 + kPi * i / kArcPoints;
    pts.push_back({half + kRadius * std::cos(ang), kRadius * std::sin(ang)});
  }
  for (double x = half; x > -half; x -= kStep) pts.push_back({x, kRadius});
  for (int i = 0; i < kArcPoints; ++i) {
    const double ang = kPi / 2.0 + kPi * i / kArcPoints;
    pts.push_back({-half + kRadius * std::cos(ang), kRadius * std::sin(ang)});
  }
  for (double x = -half; x < 0.0; x += kStep) pts.push_back({x, -kRadius});
  return Track("A", 6.0, std::move(pts));
}

Track make_track_b() { return parse_track(kTrackBData, "builtin:B"); }

std::pair<Track, Track> builtin_tracks() { return {make_track_a(), make_track_b()}; }

Track resolve_track(std::string_view id) {
  if (id == "A" || id == "a") return make_track_a();
  if (id == "B" || id == "b") return make_track_b();
  return load_track(std::filesystem::path(id));
}

}  // namespace racelab
