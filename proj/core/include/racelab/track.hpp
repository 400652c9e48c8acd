#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "racelab/common.hpp"

namespace racelab {

/// Nearest-centerline coordinates of a point.
struct Projection {
  double station = 0.0;          ///< meters along the centerline, in [0, total_length)
  double lateral = 0.0;          ///< signed meters, positive = left of travel direction
  double tangent_heading = 0.0;  ///< radians
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// Closed centerline polyline with a constant half-width. The last waypoint
/// connects back to the first. Immutable once constructed.
class Track {
 public:
  Track(std::string name, double half_width, std::vector<Vec2> waypoints);

  const std::string& name() const { return name_; }
  double half_width() const { return half_width_; }
  const std::vector<Vec2>& waypoints() const { return waypoints_; }
  /// cum_length()[i] is the station of waypoint i; the final entry is total_length().
  const std::vector<double>& cum_length() const { return cum_length_; }
  double total_length() const { return cum_length_.back(); }

  double wrap(double station) const;

  /// Nearest point on the centerline. Exact distance ties resolve to the lower station.
  Projection project(Vec2 point) const;

  /// Point offset `lateral` meters (left positive) from the centerline at `station`.
  Pose point_at(double station, double lateral) const;

  /// Signed curvature (positive for left turns) from three centerline points
  /// spaced kCurvatureSpacing apart around `station`.
  double curvature_at(double station) const;

  static constexpr double kCurvatureSpacing = 2.0;

  friend bool operator==(const Track& a, const Track& b) {
    return a.name_ == b.name_ && a.half_width_ == b.half_width_ && a.waypoints_ == b.waypoints_ &&
           a.cum_length_ == b.cum_length_;
  }

 private:
  std::size_t segment_at(double station) const;
  void build_index();

  std::string name_;
  double half_width_;
  std::vector<Vec2> waypoints_;
  std::vector<double> cum_length_;

  // Uniform grid over segment bounding boxes for nearest-segment queries.
  double cell_ = 0.0;
  Vec2 origin_;
  int cols_ = 0;
  int rows_ = 0;
  std::vector<std::vector<int>> cells_;
};

/// Parses the text track format: `name <text>`, `half_width <m>`, then `x y` lines.
Track parse_track(std::string_view text, std::string_view origin = "<memory>");
Track load_track(const std::filesystem::path& path);
std::string format_track(const Track& track);
void save_track(const Track& track, const std::filesystem::path& path);

/// Stadium oval: two 800 m straights joined by 150 m radius semicircles.
Track make_track_a();
/// Shipped sharp-turn circuit.
Track make_track_b();
std::pair<Track, Track> builtin_tracks();

/// Resolves "A", "B" or a path to a track file.
Track resolve_track(std::string_view id);

}  // namespace racelab
