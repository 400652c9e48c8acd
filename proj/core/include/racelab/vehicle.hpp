#pragma once

#include "racelab/common.hpp"
#include "racelab/track.hpp"

namespace racelab {

/// Steering convention: +1 is full right lock, -1 full left (the recording
/// convention of the driving simulator). Heading is measured counter-clockwise,
/// so positive steering lowers the heading.
struct CarState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double last_steering = 0.0;
  double last_throttle = 0.0;
  double time = 0.0;

  friend bool operator==(const CarState&, const CarState&) = default;
};

struct VehicleParams {
  double wheelbase = 2.5;
  double max_steer_angle = 0.4363;
  double a_max = 8.0;
  double k_drag = 0.199;
  double car_half_width = 0.9;
  double dt_sim = 0.02;

  double top_speed() const { return a_max / k_drag; }
};

/// Longitudinal mode: hold a fixed speed, or integrate the throttle/drag law.
struct DriveMode {
  enum class Kind { FixedSpeed, Throttle };
  Kind kind = Kind::FixedSpeed;
  double speed = 0.0;  ///< m/s, FixedSpeed only

  static DriveMode fixed_speed(double mps) { return {Kind::FixedSpeed, mps}; }
  static DriveMode throttle() { return {Kind::Throttle, 0.0}; }
  bool is_fixed() const { return kind == Kind::FixedSpeed; }
  friend bool operator==(const DriveMode&, const DriveMode&) = default;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

/// Commands are applied at 10 Hz over this many integration steps.
inline constexpr int kStepsPerControl = 5;
inline constexpr double kControlPeriod = 0.1;

/// One explicit-Euler step of the kinematic bicycle model.
CarState step(const CarState& state, double steering, double throttle, const DriveMode& mode,
              const VehicleParams& params);

/// Zero-order hold of one command over a full 0.1 s control period.
CarState advance_control_period(CarState state, double steering, double throttle, const DriveMode& mode,
                                const VehicleParams& params);

/// Car placed on the track at `station`/`lateral`, aligned with the centerline.
CarState start_state(const Track& track, double station, double lateral, double speed);

}  // namespace racelab
