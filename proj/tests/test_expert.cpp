#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "racelab/eval.hpp"
#include "racelab/expert.hpp"
#include "racelab/sweep.hpp"
#include "support/tempdir.hpp"

using namespace racelab;
using racelab::testkit::TempDir;

namespace {

// Track A: straight from station 0 to 400, then a 150 m radius arc.
constexpr double kStraightStation = 200.0;
constexpr double kArcMid = 400.0 + 150.0 * kPi / 2.0;

std::map<std::string, std::string> read_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[std::filesystem::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

}  // namespace

TEST(PurePursuit, ZeroOnAlignedStraight) {
  const Track t = make_track_a();
  const CarState s = start_state(t, kStraightStation, 0.0, 20.0);
  EXPECT_NEAR(pure_pursuit_steering(t, s, 0.0), 0.0, 1e-6);
}

TEST(PurePursuit, CircleClosedForm) {
  const Track t = make_track_a();
  const double expected = std::atan(2.5 / 150.0) / 0.4363;
  for (double v : {5.0, 20.0, 35.0}) {
    const CarState s = start_state(t, kArcMid, 0.0, v);
    const double u = pure_pursuit_steering(t, s, 0.0);
    EXPECT_NEAR(std::abs(u), expected, 0.1 * expected) << v;
    EXPECT_LT(u, 0.0);  // A runs counter-clockwise: left turns
  }
}

TEST(PurePursuit, ClampsToFullLock) {
  const Track t = make_track_a();
  CarState s = start_state(t, kStraightStation, 0.0, 1.0);
  s.heading += kPi / 2.0;  // pointing off the track to the left
  EXPECT_EQ(pure_pursuit_steering(t, s, 0.0), 1.0);
  s.heading -= kPi;
  EXPECT_EQ(pure_pursuit_steering(t, s, 0.0), -1.0);
}

TEST(SpeedLaw, CornerSpeed) {
  EXPECT_NEAR(corner_speed(1.0 / 30.0), std::sqrt(6.0 * 30.0), 1e-12);
  EXPECT_NEAR(corner_speed(1.0 / 30.0), 13.4, 0.05);
  EXPECT_EQ(corner_speed(0.0), VehicleParams{}.top_speed());
  EXPECT_EQ(corner_speed(-1.0 / 30.0), corner_speed(1.0 / 30.0));
}

TEST(SpeedLaw, FullThrottleOnStraightBelowTopSpeed) {
  const Track t = make_track_a();
  // Far enough from the arc that the drag-only preview does not bind.
  const CarState s = start_state(t, 0.0, 0.0, 5.0);
  EXPECT_EQ(expert_throttle(t, s), 1.0);
  EXPECT_EQ(throttle_command(30.0, 0.0), 1.0);
}

TEST(SpeedLaw, EquilibriumIsFeedForward) {
  const VehicleParams p;
  for (double v : {5.0, 20.0, 35.0}) EXPECT_NEAR(throttle_command(v, v), p.k_drag * v / p.a_max, 1e-6);
  // The feed-forward command holds speed under the vehicle model.
  CarState s;
  s.speed = 20.0;
  const CarState n = advance_control_period(s, 0.0, throttle_command(20.0, 20.0), DriveMode::throttle(), p);
  EXPECT_NEAR(n.speed, 20.0, 1e-9);
}

TEST(SpeedLaw, TargetBelowCornerSpeedOnArc) {
  const Track t = make_track_a();
  const double v = expert_target_speed(t, kArcMid, 10.0);
  EXPECT_LE(v, corner_speed(1.0 / 150.0) + 1e-9);
  EXPECT_GT(expert_target_speed(t, kStraightStation, 10.0), v);
}

TEST(Plan, DeterministicAndSeedDependent) {
  const Track t = make_track_a();
  EXPECT_EQ(make_plan(5, 10, t), make_plan(5, 10, t));
  EXPECT_FALSE(make_plan(5, 10, t) == make_plan(6, 10, t));
  EXPECT_THROW(make_plan(5, 0, t), ParameterError);
}

TEST(Plan, BothLanesInFirstCycle) {
  const Track t = make_track_a();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DiversityPlan p = make_plan(seed, 2, t);
    ASSERT_EQ(p.laps().size(), 2u);
    bool left = false, right = false;
    for (const LapPlan& l : p.laps()) {
      left |= l.kind == LapKind::LeftLane;
      right |= l.kind == LapKind::RightLane;
    }
    EXPECT_TRUE(left && right) << seed;
  }
}

TEST(Plan, EqualProportions) {
  const Track t = make_track_b();
  const DiversityPlan p = make_plan(9, 50, t);
  std::map<LapKind, int> counts;
  for (const LapPlan& l : p.laps()) ++counts[l.kind];
  ASSERT_EQ(counts.size(), 5u);
  for (const auto& [kind, n] : counts) EXPECT_EQ(n, 10) << lap_kind_name(kind);
}

TEST(Plan, OffsetsWithinUsableWidth) {
  const ExpertConfig cfg;
  const VehicleParams vp;
  for (const Track& t : {make_track_a(), make_track_b()}) {
    const double bound = t.half_width() - vp.car_half_width - cfg.margin;
    EXPECT_NEAR(bound, 4.8, 1e-12);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const DiversityPlan p = make_plan(seed, 10, t);
      EXPECT_LE(p.max_abs_offset(), bound + 1e-12);
      for (const LapPlan& l : p.laps())
        for (const Excursion& e : l.excursions) {
          EXPECT_LE(std::abs(e.peak), bound);
          EXPECT_GT(std::abs(e.peak), cfg.lane_offset);
        }
    }
  }
}

TEST(Plan, LaneChangeStationsSpread) {
  const Track t = make_track_a();
  std::vector<double> stations;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const DiversityPlan p = make_plan(seed, 5, t);
    for (const LapPlan& l : p.laps())
      for (double c : l.change_stations) stations.push_back(c);
  }
  ASSERT_GE(stations.size(), 40u);
  int first_half = 0;
  for (double s : stations) {
    EXPECT_GE(s, 0.0);
    EXPECT_LT(s, t.total_length());
    first_half += s < t.total_length() / 2.0;
  }
  const double frac = double(first_half) / stations.size();
  EXPECT_GT(frac, 0.3);
  EXPECT_LT(frac, 0.7);
}

TEST(Plan, TargetsContinuousAcrossLaps) {
  const Track t = make_track_a();
  const DiversityPlan p = make_plan(2, 10, t);
  double prev = p.target_at_progress(0.0);
  EXPECT_EQ(prev, 0.0);
  for (double s = 0.5; s < 10 * t.total_length(); s += 0.5) {
    const double v = p.target_at_progress(s);
    ASSERT_LT(std::abs(v - prev), 0.2) << s;
    prev = v;
  }
}

// Counts follow length / (speed * 0.1 s) for a car on the centerline.
TEST(Collect, SampleCountAt80Mph) {
  const Track t = make_track_a();
  const Dataset d = collect(t, DriveMode::fixed_speed(mph_to_mps(80.0)), 1, center_plan(1, t), 1);
  const double expected = t.total_length() / (mph_to_mps(80.0) * 0.1);
  EXPECT_NEAR(static_cast<double>(d.size()), expected, 2.0);
  EXPECT_NEAR(static_cast<double>(d.size()), 711.0, 2.0);
  EXPECT_EQ(d.meta().track, "A");
  EXPECT_EQ(d.meta().mode, "fixed");
  EXPECT_EQ(d.meta().n_laps, 1);
  EXPECT_EQ(d.meta().seed, 1u);
  EXPECT_NEAR(d.meta().speed_mph, 80.0, 1e-6);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d.samples()[i].time, 0.1 * i, 1e-9);
}

TEST(Collect, TenLapsAt50MatchSixteenAt80) {
  const Track t = make_track_a();
  const std::size_t n50 = collect(t, DriveMode::fixed_speed(mph_to_mps(50.0)), 10, center_plan(10, t), 1).size();
  const std::size_t n80 = collect(t, DriveMode::fixed_speed(mph_to_mps(80.0)), 16, center_plan(16, t), 1).size();
  EXPECT_NEAR(static_cast<double>(n50), static_cast<double>(n80), 2.0);
  EXPECT_EQ(equivalent_laps(10, 50, 80), 16.0);
}

TEST(Collect, LabelsInRangeAndLapsMarked) {
  const Track t = make_track_b();
  const Dataset d = collect(t, DriveMode::throttle(), 2, make_plan(4, 2, t), 4);
  EXPECT_EQ(d.meta().mode, "throttle");
  EXPECT_EQ(d.lap_count(), 2u);
  double min_throttle = 1.0, max_throttle = 0.0;
  for (const Sample& s : d.samples()) {
    ASSERT_GE(s.steering, -1.0);
    ASSERT_LE(s.steering, 1.0);
    ASSERT_GE(s.throttle, 0.0);
    ASSERT_LE(s.throttle, 1.0);
    ASSERT_GE(s.speed, 0.0);
    min_throttle = std::min(min_throttle, s.throttle);
    max_throttle = std::max(max_throttle, s.throttle);
  }
  EXPECT_LT(min_throttle, 0.3);
  EXPECT_EQ(max_throttle, 1.0);
  EXPECT_EQ(d.samples().front().speed, 0.0);  // starts from rest
}

TEST(Collect, FixedModeThrottleIsFeedForward) {
  const Track t = make_track_a();
  const double v = mph_to_mps(30.0);
  const Dataset d = collect(t, DriveMode::fixed_speed(v), 1, center_plan(1, t), 1);
  const VehicleParams p;
  for (const Sample& s : d.samples()) {
    ASSERT_EQ(s.speed, quantize6(v));
    ASSERT_NEAR(s.throttle, p.k_drag * v / p.a_max, 1e-6);
  }
}

TEST(Collect, ByteIdenticalFiles) {
  const Track t = make_track_a();
  const DriveMode mode = DriveMode::fixed_speed(mph_to_mps(60.0));
  TempDir dir("collect");
  save_dataset(collect(t, mode, 1, make_plan(8, 1, t), 8), dir / "a");
  save_dataset(collect(t, mode, 1, make_plan(8, 1, t), 8), dir / "b");
  const auto a = read_tree(dir / "a"), b = read_tree(dir / "b");
  EXPECT_GT(a.size(), 100u);
  EXPECT_TRUE(a == b);
}

TEST(Collect, RejectsBadArguments) {
  const Track t = make_track_a();
  EXPECT_THROW(collect(t, DriveMode::fixed_speed(10.0), 2, make_plan(1, 1, t), 1), ParameterError);
  EXPECT_THROW(collect(t, DriveMode::fixed_speed(0.0), 1, make_plan(1, 1, t), 1), ParameterError);
}

// Center-line tracking at fixed speed, measured by an independent rollout.
class ExpertTracking : public ::testing::TestWithParam<std::tuple<char, double>> {};

TEST_P(ExpertTracking, WithinOneMeterAfterTransient) {
  const auto [id, mph] = GetParam();
  const Track t = resolve_track(std::string(1, id));
  PurePursuitPolicy expert(t, 0.0);
  RolloutOptions opts;
  opts.n_laps = 1;
  opts.record_trace = true;
  const EvalReport r = rollout(expert, t, DriveMode::fixed_speed(mph_to_mps(mph)), opts);
  ASSERT_TRUE(r.completed());
  double worst = 0.0;
  for (const TickRecord& k : r.trace)
    if (k.time >= 5.0) worst = std::max(worst, std::abs(k.lateral));
  EXPECT_LT(worst, 1.0) << id << " @ " << mph << " mph";
}

INSTANTIATE_TEST_SUITE_P(BuiltinTracks, ExpertTracking,
                         ::testing::Combine(::testing::Values('A', 'B'), ::testing::Values(30.0, 50.0, 65.0, 80.0)),
                         [](const auto& info) {
                           return std::string(1, std::get<0>(info.param)) + "_" +
                                  std::to_string(static_cast<int>(std::get<1>(info.param))) + "mph";
                         });
