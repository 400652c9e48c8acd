#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "racelab/expert.hpp"
#include "racelab/nn.hpp"
#include "racelab/track.hpp"
#include "racelab/vehicle.hpp"
#include "racelab/vision.hpp"

namespace racelab {

struct Control {
  double steering = 0.0;
  double throttle = 0.0;
};

/// Maps one control tick's observation to a command. The center camera image
/// is the only input learned policies see; the state is there for oracles.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Control act(const Image& center, const CarState& state) = 0;
  /// Whether throttle() output is meaningful (required for throttle-mode rollouts).
  virtual bool has_throttle() const { return false; }
};

class NetworkPolicy : public Policy {
 public:
  explicit NetworkPolicy(Network steering);
  Control act(const Image& center, const CarState& state) override;

 private:
  Network net_;
  ForwardCache cache_;
};

struct MergedModel;

class MergedPolicy : public Policy {
 public:
  explicit MergedPolicy(const MergedModel& model);
  ~MergedPolicy() override;
  Control act(const Image& center, const CarState& state) override;
  bool has_throttle() const override { return true; }

 private:
  std::unique_ptr<MergedModel> model_;
};

/// The scripted expert: pure pursuit on a fixed lateral target plus the
/// curvature-aware speed law.
class PurePursuitPolicy : public Policy {
 public:
  PurePursuitPolicy(const Track& track, double target_lateral = 0.0, ExpertConfig cfg = {}, VehicleParams params = {});
  Control act(const Image& center, const CarState& state) override;
  bool has_throttle() const override { return true; }

 private:
  const Track* track_;
  double target_;
  ExpertConfig cfg_;
  VehicleParams params_;
};

class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(Control c) : c_(c) {}
  Control act(const Image&, const CarState&) override { return c_; }
  bool has_throttle() const override { return true; }

 private:
  Control c_;
};

struct TickRecord {
  double time = 0.0;
  double station = 0.0;
  double lateral = 0.0;
  double speed = 0.0;
  double steering = 0.0;
  double throttle = 0.0;
};

struct RolloutOptions {
  int n_laps = 5;
  double start_station = 0.0;
  /// Nominal lap speed in throttle mode, used only for the time cap.
  double throttle_reference_speed = 10.0;
  double time_cap_factor = 3.0;
  bool record_trace = false;
  VehicleParams vehicle;
  CameraRig rig;
};

struct EvalReport {
  DriveMode mode;
  int laps_requested = 0;
  int laps_completed = 0;
  bool collided = false;
  int collision_lap = 0;  ///< 1-based; 0 when no collision
  double collision_station = 0.0;
  double collision_lateral = 0.0;  ///< lateral offset at the terminating step
  bool timed_out = false;
  std::vector<double> lap_times;
  std::optional<double> avg_lap_time;  ///< set only when every requested lap completed
  int edge_touches = 0;
  std::vector<TickRecord> trace;

  /// Criterion 1: all laps done without collision or timeout.
  bool completed() const { return laps_completed == laps_requested && !collided && !timed_out; }
  bool edge_clean() const { return edge_touches == 0; }
};

EvalReport rollout(Policy& policy, const Track& track, const DriveMode& mode, const RolloutOptions& opts = {});

/// Per-speed reports of a speed search and the fastest passing speed.
struct SpeedSearch {
  std::optional<double> max_speed_mph;
  std::vector<std::pair<double, EvalReport>> reports;
  const EvalReport* at(double mph) const;
};

/// Evaluates every speed of an ascending list and returns the highest one
/// completing the rollout.
SpeedSearch max_stable_speed(Policy& policy, const Track& track, const std::vector<double>& speeds_mph,
                             const RolloutOptions& opts = {});

inline const std::vector<double> kDefaultSpeedGrid = {10, 20, 30, 40, 50, 60, 70, 80};

}  // namespace racelab
