#pragma once

#include <cstdint>
#include <vector>

#include "racelab/dataset.hpp"
#include "racelab/track.hpp"
#include "racelab/vehicle.hpp"
#include "racelab/vision.hpp"

namespace racelab {

struct ExpertConfig {
  double lookahead_time = 0.5;  ///< seconds of travel
  double lookahead_min = 5.0;   ///< meters
  double lane_offset = 2.0;     ///< meters
  double speed_kp = 0.5;        ///< 1/s
  double a_lat_max = 6.0;       ///< m/s^2
  double preview_min = 10.0;    ///< meters of curvature preview ahead of the car
  double preview_step = 2.0;    ///< meters between preview samples
  double margin = 0.3;          ///< clearance kept between body and edge line

  double lookahead(double speed) const { return std::max(lookahead_min, lookahead_time * speed); }
};

enum class LapKind { CenterLine, LeftLane, RightLane, LaneChange, EdgeExcursion };
std::string_view lap_kind_name(LapKind kind);

/// Raised-cosine bump of the target offset over [start, start + length).
struct Excursion {
  double start = 0.0;
  double length = 0.0;
  double peak = 0.0;  ///< signed meters
  friend bool operator==(const Excursion&, const Excursion&) = default;
};

struct LapPlan {
  LapKind kind = LapKind::CenterLine;
  double initial_offset = 0.0;          ///< LaneChange: lane held before the first change
  std::vector<double> change_stations;  ///< LaneChange: start of each lane swap
  std::vector<Excursion> excursions;    ///< EdgeExcursion
  friend bool operator==(const LapPlan&, const LapPlan&) = default;
};

/// Per-lap schedule of target lateral offsets.
class DiversityPlan {
 public:
  DiversityPlan() = default;
  DiversityPlan(std::vector<LapPlan> laps, double lane_offset, double track_length);

  const std::vector<LapPlan>& laps() const { return laps_; }
  double lane_offset() const { return lane_offset_; }
  double track_length() const { return track_length_; }

  /// Target offset at `station` of lap `lap`. Changes between laps are blended
  /// over kBlendLength meters at the start of each lap; lap 0 blends from 0.
  double target(std::size_t lap, double station) const;
  /// Target offset at a cumulative progress (lap * length + station).
  double target_at_progress(double progress) const;
  /// Largest |target| anywhere in the plan.
  double max_abs_offset() const;

  /// Plan consisting of the laps [begin, end).
  DiversityPlan slice(std::size_t begin, std::size_t end) const;

  static constexpr double kBlendLength = 60.0;
  static constexpr double kLaneChangeLength = 60.0;

  friend bool operator==(const DiversityPlan&, const DiversityPlan&) = default;

 private:
  double raw_target(std::size_t lap, double station) const;

  std::vector<LapPlan> laps_;
  double lane_offset_ = 2.0;
  double track_length_ = 0.0;
};

/// Pure-pursuit steering toward point_at(station + lookahead, target_lateral).
/// Returns the normalized command (+1 = full right).
double pure_pursuit_steering(const Track& track, const CarState& state, double target_lateral,
                             const ExpertConfig& cfg = {}, const VehicleParams& params = {});

/// Steady cornering speed allowed by the lateral-acceleration law.
double corner_speed(double curvature, const ExpertConfig& cfg = {}, const VehicleParams& params = {});

/// Feed-forward plus proportional throttle toward v_target.
double throttle_command(double v_target, double speed, const ExpertConfig& cfg = {}, const VehicleParams& params = {});

/// Speed the expert aims for at `station`: the corner-speed law applied to the
/// curvature preview ahead, relaxed by what drag alone removes before each
/// previewed point.
double expert_target_speed(const Track& track, double station, double speed, const ExpertConfig& cfg = {},
                           const VehicleParams& params = {});

double expert_throttle(const Track& track, const CarState& state, const ExpertConfig& cfg = {},
                       const VehicleParams& params = {});

/// Deterministic lap plan. Each block of five laps holds one left-lane and one
/// right-lane lap (in seeded order) followed by center-line, lane-change and
/// edge-excursion laps (in seeded order).
DiversityPlan make_plan(std::uint64_t strategy_seed, int n_laps, const Track& track, const ExpertConfig& cfg = {},
                        const VehicleParams& params = {});

/// All-center-line plan.
DiversityPlan center_plan(int n_laps, const Track& track);

class CollectionError : public Error {
 public:
  using Error::Error;
};

struct CollectOptions {
  ExpertConfig expert;
  VehicleParams vehicle;
  CameraRig rig;
};

/// Runs the expert for n_laps and records one sample per 0.1 s control tick.
Dataset collect(const Track& track, const DriveMode& mode, int n_laps, const DiversityPlan& plan, std::uint64_t seed,
                const CollectOptions& opts = {});

}  // namespace racelab
