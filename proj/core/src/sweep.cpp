#include "racelab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

namespace racelab {

namespace {

std::string num(double v, const char* f) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

SweepResult sweep_insight1(const Track& track, double train_speed_mph, const std::vector<int>& laps_list,
                           std::uint64_t seed, const SweepOptions& opts) {
  if (laps_list.empty()) throw ParameterError("laps list is empty");
  for (std::size_t i = 0; i < laps_list.size(); ++i) {
    if (laps_list[i] < 1) throw ParameterError("lap counts must be >= 1");
    if (i > 0 && laps_list[i] <= laps_list[i - 1]) throw ParameterError("laps list must be strictly ascending");
  }
  if (!(train_speed_mph > 0.0)) throw ParameterError("training speed must be positive");
  if (opts.jobs < 1) throw ParameterError("jobs must be >= 1");

  SweepResult result;
  result.track = track.name();
  result.train_speed_mph = train_speed_mph;
  result.seed = seed;
  result.rows.resize(laps_list.size());
  for (std::size_t i = 0; i < laps_list.size(); ++i) result.rows[i].laps = laps_list[i];

  const int max_laps = laps_list.back();
  Dataset data;
  try {
    const DiversityPlan plan = make_plan(seed, max_laps, track, opts.collect.expert, opts.collect.vehicle);
    data = collect(track, DriveMode::fixed_speed(mph_to_mps(train_speed_mph)), max_laps, plan, seed, opts.collect);
  } catch (const Error& e) {
    for (SweepRow& row : result.rows) row.error = std::string("collection failed: ") + e.what();
    return result;
  }

  TrainConfig tc = opts.train;
  tc.seed = seed;
  auto run_row = [&](SweepRow& row) {
    try {
      const Dataset part = data.laps(0, static_cast<std::size_t>(row.laps));
      row.samples = part.size();
      auto pre = opts.pretrained.find(row.laps);
      Network model = pre != opts.pretrained.end() ? pre->second : train_steering(part, tc).model;
      NetworkPolicy policy(model);
      const SpeedSearch search = max_stable_speed(policy, track, opts.speeds_mph, opts.rollout);
      row.max_speed_mph = search.max_speed_mph;
      if (search.max_speed_mph) {
        const EvalReport* r = search.at(*search.max_speed_mph);
        row.five_laps = r->completed();
        row.alt_s = r->avg_lap_time;
        row.edge_clean = r->edge_clean();
      }
      row.model = std::move(model);
    } catch (const Error& e) {
      row.error = e.what();
    }
  };

  const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(opts.jobs), result.rows.size());
  if (jobs <= 1) {
    for (SweepRow& row : result.rows) run_row(row);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t j = 0; j < jobs; ++j)
      workers.emplace_back([&] {
        for (std::size_t i; (i = next++) < result.rows.size();) run_row(result.rows[i]);
      });
    for (auto& w : workers) w.join();
  }
  return result;
}

std::string sweep_csv(const SweepResult& r) {
  std::string out = "laps,max_speed_mph,five_laps,alt_s,edge_clean\n";
  for (const SweepRow& row : r.rows) {
    out += std::to_string(row.laps) + ',';
    out += (row.max_speed_mph ? num(*row.max_speed_mph, "%g") : "NA") + ',';
    out += std::string(row.five_laps ? "yes" : "no") + ',';
    out += (row.alt_s ? num(*row.alt_s, "%.3f") : "NA") + ',';
    out += row.edge_clean ? (*row.edge_clean ? "yes" : "no") : "NA";
    out += '\n';
  }
  return out;
}

CrossSpeedResult cross_speed_check(const Track& track, double high_speed_mph, double low_speed_mph, int laps,
                                   std::uint64_t seed, const SweepOptions& opts) {
  if (!(high_speed_mph > low_speed_mph) || !(low_speed_mph > 0.0))
    throw ParameterError("need high_speed > low_speed > 0");
  if (laps < 1) throw ParameterError("laps must be >= 1");
  const DiversityPlan plan = make_plan(seed, laps, track, opts.collect.expert, opts.collect.vehicle);
  const Dataset data = collect(track, DriveMode::fixed_speed(mph_to_mps(high_speed_mph)), laps, plan, seed, opts.collect);
  TrainConfig tc = opts.train;
  tc.seed = seed;
  NetworkPolicy policy(train_steering(data, tc).model);
  CrossSpeedResult out;
  out.high_speed_mph = high_speed_mph;
  out.low_speed_mph = low_speed_mph;
  out.laps = laps;
  out.samples = data.size();
  out.report = rollout(policy, track, DriveMode::fixed_speed(mph_to_mps(low_speed_mph)), opts.rollout);
  out.passed = out.report.completed();
  out.equivalent_low_speed_laps = equivalent_laps(laps, high_speed_mph, low_speed_mph);
  return out;
}

ThrottleProfile throttle_profile(const EvalReport& r, const Track& track, double curve_kappa, double straight_kappa) {
  ThrottleProfile p;
  double curve = 0.0, straight = 0.0;
  for (const TickRecord& t : r.trace) {
    const double k = std::abs(track.curvature_at(t.station));
    if (k > curve_kappa) {
      curve += t.throttle;
      ++p.curve_ticks;
    } else if (k < straight_kappa) {
      straight += t.throttle;
      ++p.straight_ticks;
    }
  }
  if (p.curve_ticks) p.curve_mean = curve / static_cast<double>(p.curve_ticks);
  if (p.straight_ticks) p.straight_mean = straight / static_cast<double>(p.straight_ticks);
  return p;
}

ThrottleStudy throttle_study(const Track& track, int laps, double steer_speed_mph, std::uint64_t seed,
                             const SweepOptions& opts) {
  if (laps < 1) throw ParameterError("laps must be >= 1");
  if (!(steer_speed_mph > 0.0)) throw ParameterError("steering speed must be positive");
  const DiversityPlan plan = make_plan(seed, laps, track, opts.collect.expert, opts.collect.vehicle);
  const Dataset steer_data =
      collect(track, DriveMode::fixed_speed(mph_to_mps(steer_speed_mph)), laps, plan, seed, opts.collect);
  const Dataset thr_data = collect(track, DriveMode::throttle(), laps, plan, seed, opts.collect);
  TrainConfig tc = opts.train;
  tc.seed = seed;
  Network steering = train_steering(steer_data, tc).model;
  Network throttle = train_throttle(thr_data, steering, tc).model;
  MergedModel merged = merge_models(steering, throttle);
  ThrottleStudy s{std::move(steering), std::move(throttle), std::move(merged), steer_data.size(), thr_data.size(), {}, {}};
  MergedPolicy policy(s.merged);
  RolloutOptions ro = opts.rollout;
  ro.record_trace = true;
  s.report = rollout(policy, track, DriveMode::throttle(), ro);
  s.profile = throttle_profile(s.report, track);
  return s;
}

}  // namespace racelab
