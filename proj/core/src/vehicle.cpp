#include "racelab/vehicle.hpp"

namespace racelab {

CarState step(const CarState& state, double steering, double throttle, const DriveMode& mode,
              const VehicleParams& params) {
  if (!std::isfinite(state.x) || !std::isfinite(state.y) || !std::isfinite(state.heading) ||
      !std::isfinite(state.speed) || !std::isfinite(state.time))
    throw SimulationError("non-finite car state at t=" + std::to_string(state.time));
  steering = clamp(std::isfinite(steering) ? steering : 0.0, -1.0, 1.0);
  throttle = clamp(std::isfinite(throttle) ? throttle : 0.0, 0.0, 1.0);

  const double dt = params.dt_sim;
  const double speed = mode.is_fixed() ? mode.speed : state.speed;
  const double delta = steering * params.max_steer_angle;
  const double yaw_rate = -speed * std::tan(delta) / params.wheelbase;

  CarState next = state;
  next.x = state.x + dt * speed * std::cos(state.heading);
  next.y = state.y + dt * speed * std::sin(state.heading);
  next.heading = wrap_angle(state.heading + dt * yaw_rate);
  if (mode.is_fixed()) {
    next.speed = mode.speed;
  } else {
    next.speed = std::max(0.0, speed + dt * (params.a_max * throttle - params.k_drag * speed));
  }
  next.last_steering = steering;
  next.last_throttle = throttle;
  next.time = state.time + dt;
  return next;
}

CarState advance_control_period(CarState state, double steering, double throttle, const DriveMode& mode,
                                const VehicleParams& params) {
  for (int i = 0; i < kStepsPerControl; ++i) state = step(state, steering, throttle, mode, params);
  return state;
}

CarState start_state(const Track& track, double station, double lateral, double speed) {
  const Pose p = track.point_at(station, lateral);
  CarState s;
  s.x = p.x;
  s.y = p.y;
  s.heading = p.heading;
  s.speed = speed;
  return s;
}

}  // namespace racelab
