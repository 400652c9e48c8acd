#include "racelab/eval.hpp"

#include "racelab/pipeline.hpp"

namespace racelab {

NetworkPolicy::NetworkPolicy(Network steering) : net_(std::move(steering)) {
  if (!(net_.input_shape() == kImageInput) || net_.output_shape().size() != 1)
    throw ShapeError("steering policy needs a 1x32x64 -> 1 network");
}

Control NetworkPolicy::act(const Image& center, const CarState&) {
  const TensorD out = forward(net_, images_to_batch({&center}), &cache_);
  return {out[0], 0.0};
}

MergedPolicy::MergedPolicy(const MergedModel& model) : model_(std::make_unique<MergedModel>(model)) {}
MergedPolicy::~MergedPolicy() = default;

Control MergedPolicy::act(const Image& center, const CarState&) {
  const JointPrediction p = predict(*model_, images_to_batch({&center}))[0];
  return {p.steering, p.throttle};
}

PurePursuitPolicy::PurePursuitPolicy(const Track& track, double target_lateral, ExpertConfig cfg,
                                     VehicleParams params)
    : track_(&track), target_(target_lateral), cfg_(cfg), params_(params) {}

Control PurePursuitPolicy::act(const Image&, const CarState& state) {
  return {pure_pursuit_steering(*track_, state, target_, cfg_, params_),
          expert_throttle(*track_, state, cfg_, params_)};
}

EvalReport rollout(Policy& policy, const Track& track, const DriveMode& mode, const RolloutOptions& opts) {
  if (opts.n_laps < 1) throw ParameterError("rollout needs at least one lap");
  if (!mode.is_fixed() && !policy.has_throttle())
    throw ParameterError("throttle-mode rollout needs a policy with a throttle output");
  if (mode.is_fixed() && !(mode.speed > 0.0)) throw ParameterError("fixed-speed rollout needs a positive speed");

  EvalReport rep;
  rep.mode = mode;
  rep.laps_requested = opts.n_laps;

  const Renderer renderer(track, opts.rig);
  const double length = track.total_length();
  const double hw = track.half_width();
  const double nominal = length / (mode.is_fixed() ? mode.speed : opts.throttle_reference_speed);
  const double cap = opts.time_cap_factor * nominal;

  CarState car = start_state(track, opts.start_station, 0.0, mode.is_fixed() ? mode.speed : 0.0);
  double station = track.project({car.x, car.y}).station;
  double progress = 0.0;
  double lap_start = 0.0;
  bool touching = false;

  while (true) {
    const Image center = renderer.render(car, CameraId::Center);
    const Control u = policy.act(center, car);
    const double steering = clamp(std::isfinite(u.steering) ? u.steering : 0.0, -1.0, 1.0);
    const double throttle = clamp(std::isfinite(u.throttle) ? u.throttle : 0.0, 0.0, 1.0);
    if (opts.record_trace) {
      const Projection p = track.project({car.x, car.y});
      rep.trace.push_back({car.time, p.station, p.lateral, car.speed, steering, throttle});
    }
    for (int k = 0; k < kStepsPerControl; ++k) {
      const double t_prev = car.time;
      car = step(car, steering, throttle, mode, opts.vehicle);
      const Projection p = track.project({car.x, car.y});
      double ds = p.station - station;
      if (ds > length / 2.0) ds -= length;
      if (ds < -length / 2.0) ds += length;
      const double prev_progress = progress;
      progress += ds;
      station = p.station;

      const double lap_end = (rep.laps_completed + 1) * length;
      if (progress >= lap_end && prev_progress < lap_end) {
        const double t = t_prev + (car.time - t_prev) * (lap_end - prev_progress) / (progress - prev_progress);
        rep.lap_times.push_back(t - lap_start);
        lap_start = t;
        ++rep.laps_completed;
      }
      if (std::abs(p.lateral) > hw) {
        rep.collided = true;
        rep.collision_lap = rep.laps_completed + 1;
        rep.collision_station = p.station;
        rep.collision_lateral = p.lateral;
        return rep;
      }
      const bool touch = std::abs(p.lateral) + opts.vehicle.car_half_width >= hw;
      if (touch && !touching) ++rep.edge_touches;
      touching = touch;
      if (rep.laps_completed == rep.laps_requested) {
        double sum = 0.0;
        for (double t : rep.lap_times) sum += t;
        rep.avg_lap_time = sum / static_cast<double>(rep.lap_times.size());
        return rep;
      }
      if (car.time - lap_start > cap) {
        rep.timed_out = true;
        return rep;
      }
    }
  }
}

const EvalReport* SpeedSearch::at(double mph) const {
  for (const auto& [s, r] : reports)
    if (s == mph) return &r;
  return nullptr;
}

SpeedSearch max_stable_speed(Policy& policy, const Track& track, const std::vector<double>& speeds_mph,
                             const RolloutOptions& opts) {
  if (speeds_mph.empty()) throw ParameterError("speed list is empty");
  for (std::size_t i = 1; i < speeds_mph.size(); ++i)
    if (!(speeds_mph[i] > speeds_mph[i - 1])) throw ParameterError("speed list must be strictly ascending");
  SpeedSearch out;
  for (double mph : speeds_mph) {
    if (!(mph > 0.0)) throw ParameterError("speeds must be positive");
    EvalReport r = rollout(policy, track, DriveMode::fixed_speed(mph_to_mps(mph)), opts);
    if (r.completed()) out.max_speed_mph = mph;
    out.reports.emplace_back(mph, std::move(r));
  }
  return out;
}

}  // namespace racelab
