#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "racelab/pipeline.hpp"

namespace racelab {

struct SweepRow {
  int laps = 0;
  std::size_t samples = 0;
  std::optional<double> max_speed_mph;
  bool five_laps = false;
  std::optional<double> alt_s;  ///< at max_speed_mph
  std::optional<bool> edge_clean;
  std::string error;  ///< set when collection or training failed
  std::optional<Network> model;
};

struct SweepResult {
  std::string track;
  double train_speed_mph = 0.0;
  std::uint64_t seed = 0;
  std::vector<SweepRow> rows;  ///< ascending laps
};

struct SweepOptions {
  TrainConfig train;
  CollectOptions collect;
  RolloutOptions rollout;
  std::vector<double> speeds_mph = kDefaultSpeedGrid;
  int jobs = 1;
  /// Models already trained on the same data prefix and config; rows found here skip training.
  std::map<int, Network> pretrained;
};

/// Collects max(laps_list) laps once; row n trains on the first n laps.
SweepResult sweep_insight1(const Track& track, double train_speed_mph, const std::vector<int>& laps_list,
                           std::uint64_t seed, const SweepOptions& opts = {});

std::string sweep_csv(const SweepResult& r);

struct CrossSpeedResult {
  double high_speed_mph = 0.0;
  double low_speed_mph = 0.0;
  int laps = 0;
  std::size_t samples = 0;
  bool passed = false;  ///< Criterion 1 at low speed
  EvalReport report;
  /// Laps at the low speed holding the same number of samples.
  double equivalent_low_speed_laps = 0.0;
};

/// Trains on laps collected at high speed, evaluates at low speed.
CrossSpeedResult cross_speed_check(const Track& track, double high_speed_mph, double low_speed_mph, int laps,
                                   std::uint64_t seed, const SweepOptions& opts = {});

/// Laps at speed b carrying as many samples as `laps` laps at speed a.
inline double equivalent_laps(double laps, double speed_a, double speed_b) { return laps * speed_b / speed_a; }

/// Mean predicted throttle split by the centerline curvature under the car.
struct ThrottleProfile {
  double curve_mean = 0.0;     ///< ticks with |kappa| > curve_kappa
  double straight_mean = 0.0;  ///< ticks with |kappa| < straight_kappa
  std::size_t curve_ticks = 0;
  std::size_t straight_ticks = 0;
};

/// Needs a report recorded with record_trace.
ThrottleProfile throttle_profile(const EvalReport& r, const Track& track, double curve_kappa = 1.0 / 60.0,
                                 double straight_kappa = 1e-4);

struct ThrottleStudy {
  Network steering;
  Network throttle;
  MergedModel merged;
  std::size_t steering_samples = 0;
  std::size_t throttle_samples = 0;
  EvalReport report;  ///< throttle-mode rollout of the merged model, with trace
  ThrottleProfile profile;
};

/// Steering on `laps` laps at a fixed speed, a throttle head on `laps`
/// throttle-mode laps, merged and driven in throttle mode.
ThrottleStudy throttle_study(const Track& track, int laps, double steer_speed_mph, std::uint64_t seed,
                             const SweepOptions& opts = {});

}  // namespace racelab
