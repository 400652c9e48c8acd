#include "racelab/expert.hpp"

#include <algorithm>

namespace racelab {

std::string_view lap_kind_name(LapKind kind) {
  switch (kind) {
    case LapKind::CenterLine:
      return "center";
    case LapKind::LeftLane:
      return "left_lane";
    case LapKind::RightLane:
      return "right_lane";
    case LapKind::LaneChange:
      return "lane_change";
    case LapKind::EdgeExcursion:
      return "edge_excursion";
  }
  return "?";
}

namespace {

double smoothstep(double x) {
  x = clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace

DiversityPlan::DiversityPlan(std::vector<LapPlan> laps, double lane_offset, double track_length)
    : laps_(std::move(laps)), lane_offset_(lane_offset), track_length_(track_length) {
  if (!(track_length_ > 0.0)) throw ParameterError("plan needs a positive track length");
}

double DiversityPlan::raw_target(std::size_t lap, double s) const {
  const LapPlan& p = laps_[lap];
  switch (p.kind) {
    case LapKind::CenterLine:
      return 0.0;
    case LapKind::LeftLane:
      return lane_offset_;
    case LapKind::RightLane:
      return -lane_offset_;
    case LapKind::LaneChange: {
      double v = p.initial_offset;
      for (double c : p.change_stations) {
        if (s >= c + kLaneChangeLength) {
          v = -v;
        } else if (s > c) {
          return v - 2.0 * v * smoothstep((s - c) / kLaneChangeLength);
        }
      }
      return v;
    }
    case LapKind::EdgeExcursion: {
      double v = 0.0;
      for (const Excursion& e : p.excursions)
        if (s >= e.start && s < e.start + e.length)
          v += e.peak * 0.5 * (1.0 - std::cos(2.0 * kPi * (s - e.start) / e.length));
      return v;
    }
  }
  return 0.0;
}

double DiversityPlan::target(std::size_t lap, double station) const {
  if (laps_.empty()) return 0.0;
  if (lap >= laps_.size()) return raw_target(laps_.size() - 1, track_length_);
  const double r = raw_target(lap, station);
  if (station >= kBlendLength) return r;
  const double prev = lap == 0 ? 0.0 : raw_target(lap - 1, track_length_);
  return prev + (r - prev) * smoothstep(station / kBlendLength);
}

double DiversityPlan::target_at_progress(double progress) const {
  const double lap = std::floor(std::max(0.0, progress) / track_length_);
  return target(static_cast<std::size_t>(lap), std::max(0.0, progress) - lap * track_length_);
}

double DiversityPlan::max_abs_offset() const {
  double m = 0.0;
  for (std::size_t lap = 0; lap < laps_.size(); ++lap)
    for (double s = 0.0; s < track_length_; s += 0.5) m = std::max(m, std::abs(target(lap, s)));
  return m;
}

DiversityPlan DiversityPlan::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > laps_.size()) throw ParameterError("invalid plan slice");
  return DiversityPlan(std::vector<LapPlan>(laps_.begin() + begin, laps_.begin() + end), lane_offset_,
                       track_length_);
}

double pure_pursuit_steering(const Track& track, const CarState& state, double target_lateral,
                             const ExpertConfig& cfg, const VehicleParams& params) {
  const Projection proj = track.project({state.x, state.y});
  const Pose aim = track.point_at(proj.station + cfg.lookahead(state.speed), target_lateral);
  const double dx = aim.x - state.x, dy = aim.y - state.y;
  const double ld = std::hypot(dx, dy);
  if (ld < 1e-9) return 0.0;
  const double alpha = wrap_angle(std::atan2(dy, dx) - state.heading);
  const double delta_left = std::atan(2.0 * params.wheelbase * std::sin(alpha) / ld);
  return clamp(-delta_left / params.max_steer_angle, -1.0, 1.0);
}

double corner_speed(double curvature, const ExpertConfig& cfg, const VehicleParams& params) {
  return std::min(params.top_speed(), std::sqrt(cfg.a_lat_max / std::max(std::abs(curvature), 1e-6)));
}

double throttle_command(double v_target, double speed, const ExpertConfig& cfg, const VehicleParams& params) {
  return clamp(params.k_drag * v_target / params.a_max + cfg.speed_kp * (v_target - speed) / params.a_max, 0.0, 1.0);
}

double expert_target_speed(const Track& track, double station, double speed, const ExpertConfig& cfg,
                           const VehicleParams& params) {
  (void)speed;
  // Without brakes only drag slows the car: dv/dx = -k_drag, so a corner x
  // meters ahead allows k_drag * x more speed now. Beyond top_speed / k_drag
  // nothing ahead can bind.
  const double horizon = std::max(cfg.preview_min, params.top_speed() / params.k_drag);
  double v = params.top_speed();
  for (double x = 0.0; x <= horizon; x += cfg.preview_step)
    v = std::min(v, corner_speed(track.curvature_at(station + x), cfg, params) + params.k_drag * x);
  return v;
}

double expert_throttle(const Track& track, const CarState& state, const ExpertConfig& cfg,
                       const VehicleParams& params) {
  const double station = track.project({state.x, state.y}).station;
  return throttle_command(expert_target_speed(track, station, state.speed, cfg, params), state.speed, cfg, params);
}

namespace {

double max_abs_curvature(const Track& track, double from, double to) {
  double m = 0.0;
  for (double s = from; s <= to; s += 2.0) m = std::max(m, std::abs(track.curvature_at(s)));
  return m;
}

std::vector<double> draw_lane_changes(Rng& rng, double length) {
  constexpr double kEdge = 100.0, kGap = 150.0;
  const double lo = kEdge, hi = length - kEdge - DiversityPlan::kLaneChangeLength;
  for (std::int64_t count = rng.between(2, 4); count > 0; --count) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::vector<double> st;
      for (std::int64_t i = 0; i < count; ++i) st.push_back(std::round(rng.uniform(lo, hi)));
      std::sort(st.begin(), st.end());
      bool ok = hi > lo;
      for (std::size_t i = 1; i < st.size(); ++i) ok = ok && st[i] - st[i - 1] >= kGap;
      if (ok) return st;
    }
  }
  return {};
}

std::vector<Excursion> draw_excursions(Rng& rng, const Track& track, double max_peak) {
  constexpr double kEdge = 50.0, kMinLen = 120.0, kMaxLen = 240.0, kMaxCurvature = 1.0 / 100.0;
  const double length = track.total_length();
  const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
  for (std::int64_t count = rng.between(2, 3); count > 0; --count) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::vector<Excursion> ex;
      for (std::int64_t i = 0; i < count; ++i) {
        Excursion e;
        e.length = std::round(rng.uniform(kMinLen, kMaxLen));
        e.start = std::round(rng.uniform(kEdge, std::max(kEdge, length - kEdge - e.length)));
        e.peak = std::round(rng.uniform(3.5, max_peak) * 100.0) / 100.0;
        ex.push_back(e);
      }
      std::sort(ex.begin(), ex.end(), [](const Excursion& a, const Excursion& b) { return a.start < b.start; });
      bool ok = true;
      for (std::size_t i = 0; i < ex.size() && ok; ++i) {
        ok = ex[i].start + ex[i].length <= length - kEdge;
        if (i > 0) ok = ok && ex[i].start >= ex[i - 1].start + ex[i - 1].length;
        ok = ok && max_abs_curvature(track, ex[i].start, ex[i].start + ex[i].length) <= kMaxCurvature;
      }
      if (!ok) continue;
      for (std::size_t i = 0; i < ex.size(); ++i) ex[i].peak *= (i % 2 == 0 ? sign : -sign);
      return ex;
    }
  }
  return {};
}

}  // namespace

DiversityPlan make_plan(std::uint64_t strategy_seed, int n_laps, const Track& track, const ExpertConfig& cfg,
                        const VehicleParams& params) {
  if (n_laps < 1) throw ParameterError("n_laps must be >= 1");
  const double bound = track.half_width() - params.car_half_width - cfg.margin;
  if (cfg.lane_offset > bound) throw ParameterError("lane offset exceeds the usable half width");
  const double max_peak = std::min(4.8, bound);
  Rng rng(derive_seed(strategy_seed, 0x706c616e));
  std::vector<LapPlan> laps;
  while (static_cast<int>(laps.size()) < n_laps) {
    std::vector<LapKind> lanes = {LapKind::LeftLane, LapKind::RightLane};
    std::vector<LapKind> rest = {LapKind::CenterLine, LapKind::LaneChange, LapKind::EdgeExcursion};
    rng.shuffle(lanes);
    rng.shuffle(rest);
    lanes.insert(lanes.end(), rest.begin(), rest.end());
    for (LapKind kind : lanes) {
      if (static_cast<int>(laps.size()) == n_laps) break;
      LapPlan lp;
      lp.kind = kind;
      if (kind == LapKind::LaneChange) {
        lp.initial_offset = rng.bernoulli(0.5) ? cfg.lane_offset : -cfg.lane_offset;
        lp.change_stations = draw_lane_changes(rng, track.total_length());
      } else if (kind == LapKind::EdgeExcursion) {
        lp.excursions = draw_excursions(rng, track, max_peak);
      }
      laps.push_back(std::move(lp));
    }
  }
  return DiversityPlan(std::move(laps), cfg.lane_offset, track.total_length());
}

DiversityPlan center_plan(int n_laps, const Track& track) {
  if (n_laps < 1) throw ParameterError("n_laps must be >= 1");
  return DiversityPlan(std::vector<LapPlan>(static_cast<std::size_t>(n_laps)), 2.0, track.total_length());
}

Dataset collect(const Track& track, const DriveMode& mode, int n_laps, const DiversityPlan& plan, std::uint64_t seed,
                const CollectOptions& opts) {
  if (n_laps < 1) throw ParameterError("n_laps must be >= 1");
  if (static_cast<int>(plan.laps().size()) < n_laps)
    throw ParameterError("plan covers " + std::to_string(plan.laps().size()) + " laps, " + std::to_string(n_laps) +
                         " requested");
  if (mode.is_fixed() && !(mode.speed > 0.0)) throw ParameterError("fixed-speed collection needs a positive speed");

  DatasetMeta meta;
  meta.track = track.name();
  meta.mode = mode.is_fixed() ? "fixed" : "throttle";
  meta.speed_mph = mode.is_fixed() ? quantize6(mps_to_mph(mode.speed)) : 0.0;
  meta.seed = seed;
  meta.version = kVersion;
  Dataset data(meta, {});

  const Renderer renderer(track, opts.rig);
  const double length = track.total_length();
  CarState car = start_state(track, 0.0, 0.0, mode.is_fixed() ? mode.speed : 0.0);
  double station = track.project({car.x, car.y}).station;
  double progress = 0.0;
  for (std::int64_t tick = 0; progress < n_laps * length; ++tick) {
    const double aim = progress + opts.expert.lookahead(car.speed);
    const double steering =
        quantize6(pure_pursuit_steering(track, car, plan.target_at_progress(aim), opts.expert, opts.vehicle));
    const double throttle =
        quantize6(mode.is_fixed() ? opts.vehicle.k_drag * mode.speed / opts.vehicle.a_max
                                  : expert_throttle(track, car, opts.expert, opts.vehicle));
    Sample s;
    s.time = quantize6(static_cast<double>(tick) * kControlPeriod);
    s.lap = static_cast<int>(std::floor(progress / length));
    for (CameraId cam : kCameras) s.images[static_cast<std::size_t>(cam)] = renderer.render(car, cam);
    s.steering = steering;
    s.throttle = throttle;
    s.speed = quantize6(car.speed);
    data.append(std::move(s));

    for (int k = 0; k < kStepsPerControl; ++k) {
      car = step(car, steering, throttle, mode, opts.vehicle);
      const Projection p = track.project({car.x, car.y});
      double ds = p.station - station;
      if (ds > length / 2.0) ds -= length;
      if (ds < -length / 2.0) ds += length;
      progress += ds;
      station = p.station;
      if (std::abs(p.lateral) > track.half_width()) {
        throw CollectionError("expert left the track on lap " +
                              std::to_string(static_cast<int>(std::floor(progress / length)) + 1) + " at station " +
                              std::to_string(p.station) + " m (lateral " + std::to_string(p.lateral) + " m)");
      }
    }
  }
  return data;
}

}  // namespace racelab
