#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "racelab/pipeline.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

using namespace racelab;
using racelab::testkit::TempDir;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0;
}

bool same_params(const Network& a, const Network& b, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i)
    if (!bitwise_equal(a.weights(i), b.weights(i)) || !bitwise_equal(a.bias(i), b.bias(i))) return false;
  return true;
}

Sample rendered(const Track& t, double station, double lateral, double steering, double throttle) {
  Sample s;
  const CarState st = start_state(t, station, lateral, 10.0);
  const Renderer r(t);
  for (CameraId c : kCameras) s.images[static_cast<std::size_t>(c)] = r.render(st, c);
  s.steering = steering;
  s.throttle = throttle;
  s.speed = 10.0;
  return s;
}

Dataset tiny(std::vector<Sample> samples, const std::string& mode = "throttle") {
  DatasetMeta meta;
  meta.track = "A";
  meta.mode = mode;
  return Dataset(meta, std::move(samples));
}

TrainConfig memorize_config() {
  TrainConfig c;
  c.epochs = 200;
  c.augment = false;
  c.cameras = CameraSelection::Center;
  return c;
}

const Dataset& one_lap() {
  static const Dataset d = [] {
    const Track t = make_track_a();
    return collect(t, DriveMode::fixed_speed(mph_to_mps(80.0)), 1, make_plan(1, 1, t), 1);
  }();
  return d;
}

const Dataset& one_throttle_lap() {
  static const Dataset d = [] {
    const Track t = make_track_b();
    return collect(t, DriveMode::throttle(), 1, center_plan(1, t), 1);
  }();
  return d;
}

TrainConfig short_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  return c;
}

// Small oval keeping closed-loop pipeline tests cheap: 300 m straights, R = 60 m ends.
Track small_oval() {
  std::vector<Vec2> pts;
  const double half = 150.0, r = 60.0;
  for (double x = -half; x < half; x += 10.0) pts.push_back({x, -r});
  for (int i = 0; i < 180; ++i) {
    const double a = -kPi / 2 + kPi * i / 180;
    pts.push_back({half + r * std::cos(a), r * std::sin(a)});
  }
  for (double x = half; x > -half; x -= 10.0) pts.push_back({x, r});
  for (int i = 0; i < 180; ++i) {
    const double a = kPi / 2 + kPi * i / 180;
    pts.push_back({-half + r * std::cos(a), r * std::sin(a)});
  }
  return Track("oval", 6.0, pts);
}

}  // namespace

TEST(TrainConfig, EpochRule) {
  EXPECT_EQ(epochs_for_laps(1), 40);
  EXPECT_EQ(epochs_for_laps(10), 40);
  EXPECT_EQ(epochs_for_laps(11), 80);
  EXPECT_EQ(epochs_for_laps(25), 120);
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.epochs = -1;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(TrainSteering, MemorizesOneExample) {
  const Track t = make_track_a();
  const Dataset d = tiny({rendered(t, 100.0, 1.0, 0.3, 0.5)});
  const TrainResult r = train_steering(d, memorize_config());
  EXPECT_EQ(r.loss_trace.size(), 200u);
  EXPECT_LT(r.final_loss(), 1e-3);
  NetworkPolicy p(r.model);
  EXPECT_NEAR(p.act(d.samples()[0].image(CameraId::Center), {}).steering, 0.3, std::sqrt(1e-3));
}

TEST(TrainSteering, TraceLengthLossDropAndDeterminism) {
  std::vector<int> epochs_seen;
  const TrainResult a = train_steering(one_lap(), short_config(3), [&](int e, double) { epochs_seen.push_back(e); });
  EXPECT_EQ(a.loss_trace.size(), 3u);
  EXPECT_EQ(epochs_seen, (std::vector<int>{0, 1, 2}));
  EXPECT_LT(a.loss_trace.back(), a.loss_trace.front());
  const TrainResult b = train_steering(one_lap(), short_config(3));
  EXPECT_EQ(encode_model(a.model), encode_model(b.model));
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  TrainConfig other = short_config(3);
  other.seed = 2;
  EXPECT_NE(encode_model(train_steering(one_lap(), other).model), encode_model(a.model));
}

TEST(TrainSteering, EpochsDefaultFromLaps) {
  TrainConfig c;
  c.epochs = 0;
  c.batch_size = 1000;
  c.cameras = CameraSelection::Center;
  EXPECT_EQ(train_steering(one_lap(), c).loss_trace.size(), 40u);
}

TEST(TrainSteering, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(train_steering(tiny({}), short_config(1)), TrainingError);
  const Track t = make_track_a();
  EXPECT_THROW(train_steering(tiny({rendered(t, 100.0, 0.0, std::nan(""), 0.5)}), short_config(1)), TrainingError);
}

TEST(TrainThrottle, RefusesConstantLabels) {
  const Network steer = init_network("steering_net", 1);
  const Track t = make_track_a();
  try {
    train_throttle(one_lap(), steer, short_config(1));  // fixed-speed data: constant throttle
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_STREQ(e.what(), "throttle labels carry no signal");
  }
  EXPECT_THROW(train_throttle(tiny({rendered(t, 100.0, 0.0, 0.0, 0.4)}), steer, memorize_config()), TrainingError);
}

TEST(TrainThrottle, MemorizesDistinctExamples) {
  // A single example has zero label variance and is refused, so memorization
  // is checked on two examples that must both be fitted.
  const Track t = make_track_a();
  const Dataset d = tiny({rendered(t, 100.0, 2.0, 0.0, 0.3), rendered(t, 1000.0, -2.0, 0.0, 0.7)});
  const Network steer = init_network("steering_net", 3);
  const TrainResult r = train_throttle(d, steer, memorize_config());
  const MergedModel m = merge_models(steer, r.model);
  std::vector<const Image*> imgs = {&d.samples()[0].image(CameraId::Center), &d.samples()[1].image(CameraId::Center)};
  const auto pred = predict(m, images_to_batch(imgs));
  EXPECT_NEAR(pred[0].throttle, 0.3, 0.02);
  EXPECT_NEAR(pred[1].throttle, 0.7, 0.02);
}

TEST(TrainThrottle, ConvsFrozenBitwiseAndHeadLearns) {
  const Network steer = train_steering(one_lap(), short_config(1)).model;
  const Network init = transplant_conv(init_network("throttle_head", derive_seed(1, 2)), steer);
  const TrainResult r = train_throttle(one_throttle_lap(), steer, short_config(2));
  const std::size_t k = steer.conv_stack_size();
  EXPECT_TRUE(same_params(r.model, steer, 0, k));
  EXPECT_TRUE(same_conv_stack(r.model, steer));
  double moved = 0.0;
  for (std::size_t i = k; i < init.layer_count(); ++i)
    for (std::size_t j = 0; j < init.weights(i).size(); ++j) {
      const double d = r.model.weights(i)[j] - init.weights(i)[j];
      moved += d * d;
    }
  EXPECT_GT(moved, 0.0);
}

TEST(Merge, EquivalentToComponentsOnRandomImages) {
  const Network steer = init_network("steering_net", 5);
  Network thr = transplant_conv(init_network("throttle_head", 6), steer);
  const MergedModel m = merge_models(steer, thr);  // untrained heads are fine
  Rng rng(7);
  std::vector<Image> images(1000);
  for (Image& img : images)
    for (auto& px : img.bytes()) px = static_cast<std::uint8_t>(rng.below(256));
  std::vector<const Image*> ptrs;
  for (const Image& img : images) ptrs.push_back(&img);
  const TensorD batch = images_to_batch(ptrs);
  const auto joint = predict(m, batch);
  ASSERT_EQ(joint.size(), 1000u);
  for (std::size_t start = 0; start < 1000; start += 100) {
    const std::vector<const Image*> chunk(ptrs.begin() + start, ptrs.begin() + start + 100);
    const TensorD x = images_to_batch(chunk);
    const TensorD s = forward(steer, x), t = forward(thr, x);
    for (std::size_t i = 0; i < 100; ++i) {
      ASSERT_EQ(joint[start + i].steering, s[i]);
      ASSERT_EQ(joint[start + i].throttle, t[i]);
    }
  }
  MergedPolicy policy(m);
  const Control c = policy.act(images[0], {});
  EXPECT_EQ(c.steering, joint[0].steering);
  EXPECT_EQ(c.throttle, joint[0].throttle);
}

TEST(Merge, IndependentNetworksRejected) {
  EXPECT_THROW(merge_models(init_network("steering_net", 1), init_network("throttle_head", 2)), MergeError);
}

TEST(Merge, FileRoundTripAndPolicyLoading) {
  TempDir dir("merged");
  const Network steer = init_network("steering_net", 5);
  const MergedModel m = merge_models(steer, transplant_conv(init_network("throttle_head", 6), steer));
  save_merged_model(m, dir / "m.e2mm");
  EXPECT_EQ(load_merged_model(dir / "m.e2mm"), m);
  const std::string bytes = encode_merged_model(m);
  EXPECT_EQ(bytes.substr(0, 4), "E2MM");
  EXPECT_THROW(decode_merged_model(bytes.substr(0, bytes.size() - 3)), ModelFormatError);
  EXPECT_THROW(decode_merged_model(bytes + "z"), ModelFormatError);
  save_model(steer, dir / "s.e2em");
  EXPECT_FALSE(load_policy(dir / "s.e2em")->has_throttle());
  EXPECT_TRUE(load_policy(dir / "m.e2mm")->has_throttle());
  std::ofstream(dir / "junk") << "nope";
  EXPECT_THROW(load_policy(dir / "junk"), ModelFormatError);
}

TEST(PolicyIteration, RejectsBadSchedules) {
  const Track t = small_oval();
  EXPECT_THROW(policy_iteration(t, DriveMode::fixed_speed(10.0), {}, {}, 1), ParameterError);
  EXPECT_THROW(policy_iteration(t, DriveMode::fixed_speed(10.0), {2, 2}, {}, 1), ParameterError);
  EXPECT_THROW(policy_iteration(t, DriveMode::fixed_speed(10.0), {0, 1}, {}, 1), ParameterError);
}

TEST(PolicyIteration, ExhaustedScheduleReportsEveryIteration) {
  const Track t = small_oval();
  TempDir dir("pi");
  CriteriaThresholds th;
  th.alt_factor = 0.5;  // faster than the expert: unattainable
  PolicyIterationOptions o;
  o.train = short_config(4);
  o.audit_path = dir / "audit.ndjson";
  const PolicyIterationResult r = policy_iteration(t, DriveMode::fixed_speed(0.0), {1, 2}, th, 3, o);
  EXPECT_FALSE(r.success);
  ASSERT_EQ(r.audit.size(), 2u);
  EXPECT_EQ(r.audit[0].laps_total, 1);
  EXPECT_EQ(r.audit[1].laps_total, 2);
  EXPECT_EQ(r.audit[0].iter, 1);
  EXPECT_GE(r.best_iter, 1);
  EXPECT_FALSE(r.merged.has_value());
  std::ifstream in(dir / "audit.ndjson");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], audit_json(r.audit[0]));
  EXPECT_EQ(lines[1].rfind("{\"iter\":2,\"laps_total\":2,\"criteria\":{\"five_laps\":", 0), 0u);
}

TEST(PolicyIteration, StopsAtFirstPassingIteration) {
  const Track t = small_oval();
  CriteriaThresholds th;
  th.alt_factor = 10.0;
  th.require_edge_clean = false;
  PolicyIterationOptions o;
  o.train = short_config(20);
  const PolicyIterationResult r = policy_iteration(t, DriveMode::fixed_speed(0.0), {2, 4}, th, 3, o);
  ASSERT_TRUE(r.success);
  ASSERT_EQ(r.audit.size(), 1u);
  EXPECT_EQ(r.audit[0].laps_total, 2);
  EXPECT_EQ(r.best_iter, 1);
  EXPECT_TRUE(r.audit[0].criteria.five_laps);
}

TEST(AuditJson, Format) {
  AuditEntry e;
  e.iter = 2;
  e.laps_total = 4;
  e.criteria.five_laps = true;
  e.criteria.alt_s = 12.5;
  e.criteria.edge_clean = true;
  e.criteria.passed = true;
  e.train_loss_final = 0.25;
  EXPECT_EQ(audit_json(e),
            "{\"iter\":2,\"laps_total\":4,\"criteria\":{\"five_laps\":true,\"alt_s\":12.500000,\"edge_clean\":true},"
            "\"passed\":true,\"train_loss_final\":0.250000}");
  e.criteria.alt_s.reset();
  EXPECT_NE(audit_json(e).find("\"alt_s\":null"), std::string::npos);
}
