#include <gtest/gtest.h>

#include "racelab/vision.hpp"
#include "support/tempdir.hpp"

using namespace racelab;

namespace {

CarState pose(const Track& t, double s, double d, double psi) {
  CarState c = start_state(t, s, d, 20.0);
  c.heading = wrap_angle(c.heading + psi);
  return c;
}

Image random_image(std::uint64_t seed) {
  Rng rng(seed);
  Image img;
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST(Vision, Deterministic) {
  const Track t = make_track_b();
  const Renderer r(t);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const CarState c = pose(t, rng.uniform(0, t.total_length()), rng.uniform(-4, 4), rng.uniform(-0.3, 0.3));
    const auto cam = kCameras[rng.below(3)];
    ASSERT_EQ(r.render(c, cam), r.render(c, cam));
  }
  const CarState c = pose(t, 10.0, 0.0, 0.0);
  EXPECT_EQ(r.render(c, CameraId::Center), render(t, c, CameraId::Center));
}

TEST(Vision, HorizonRowsBlackAndContentBelow) {
  const Track t = make_track_a();
  const Renderer r(t);
  const CameraRig rig;
  const Image img = r.render(pose(t, 100.0, 0.0, 0.0), CameraId::Center);
  for (int y = 0; y <= rig.horizon_row(); ++y)
    for (int x = 0; x < img.width(); ++x) ASSERT_EQ(img.raw(x, y), 0) << x << "," << y;
  EXPECT_GT(img.mean(), 0.0);
}

TEST(Vision, CenteredOnStraightIsSymmetric) {
  const Track t = make_track_a();
  const Image img = render(t, pose(t, 100.0, 0.0, 0.0), CameraId::Center);
  EXPECT_EQ(img, hflip(img));
}

TEST(Vision, MirroredPoseRendersMirroredImage) {
  const Track t = make_track_a();
  const Renderer r(t);
  for (double d : {0.7, 2.0, 3.5})
    for (double psi : {0.0, 0.05, -0.12}) {
      const CarState a = pose(t, 100.0, d, psi), b = pose(t, 100.0, -d, -psi);
      EXPECT_EQ(hflip(r.render(a, CameraId::Center)), r.render(b, CameraId::Center)) << d << " " << psi;
      EXPECT_EQ(hflip(r.render(a, CameraId::Left)), r.render(b, CameraId::Right)) << d << " " << psi;
    }
}

TEST(Vision, SideCamerasSeeShiftedScene) {
  const Track t = make_track_a();
  const Renderer r(t);
  const CarState c = pose(t, 100.0, 0.0, 0.0);
  EXPECT_NE(r.render(c, CameraId::Left), r.render(c, CameraId::Center));
  EXPECT_EQ(hflip(r.render(c, CameraId::Left)), r.render(c, CameraId::Right));
}

TEST(Vision, HflipProperties) {
  const Image img = random_image(2);
  EXPECT_EQ(hflip(hflip(img)), img);
  EXPECT_EQ(hflip(img).mean(), img.mean());
  Image one;
  one.raw(0, 5) = 255;
  const Image f = hflip(one);
  EXPECT_EQ(f.raw(one.width() - 1, 5), 255);
  EXPECT_EQ(f.mean(), one.mean());
}

TEST(Vision, Translate) {
  const Image img = random_image(3);
  EXPECT_EQ(translate(img, 0, 0), img);
  Image one;
  one.raw(10, 10) = 200;
  const Image s = translate(one, 3, 0);
  EXPECT_EQ(s.raw(13, 10), 200);
  EXPECT_EQ(s.raw(10, 10), 0);
  const Image back = translate(translate(img, 2, 0), -2, 0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) ASSERT_EQ(back.raw(x, y), x >= img.width() - 2 ? 0 : img.raw(x, y));
  EXPECT_THROW(translate(img, img.width() / 4 + 1, 0), ParameterError);
  EXPECT_THROW(translate(img, 0, -(img.height() / 4 + 1)), ParameterError);
}

TEST(Vision, PgmRoundTrip) {
  const Image img = random_image(4);
  EXPECT_EQ(decode_pgm(encode_pgm(img)), img);
  const std::string pgm = encode_pgm(img);
  EXPECT_EQ(pgm.substr(0, 2), "P5");
  EXPECT_THROW(decode_pgm(pgm.substr(0, pgm.size() - 1)), Error);
  racelab::testkit::TempDir dir("pgm");
  write_pgm(img, (dir / "a.pgm").string());
  EXPECT_EQ(read_pgm((dir / "a.pgm").string()), img);
}

TEST(Augment, FlipNegatesSteering) {
  const AugmentConfig cfg;
  TrainingExample ex{random_image(5), 0.3, 0.7, 20.0, CameraId::Center};
  const TrainingExample f = apply_augmentation(ex, {true, 0, 0}, cfg);
  EXPECT_EQ(f.steering, -0.3);
  EXPECT_EQ(f.throttle, 0.7);
  EXPECT_EQ(f.image, hflip(ex.image));
  ex.steering = 0.0;
  EXPECT_EQ(apply_augmentation(ex, {true, 0, 0}, cfg).steering, 0.0);
}

TEST(Augment, DoubleFlipIsIdentity) {
  const AugmentConfig cfg;
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const TrainingExample ex{random_image(i), rng.uniform(-1, 1), rng.uniform(0, 1), 10.0, CameraId::Left};
    EXPECT_EQ(apply_augmentation(apply_augmentation(ex, {true, 0, 0}, cfg), {true, 0, 0}, cfg), ex);
  }
}

TEST(Augment, ShiftCompensation) {
  const AugmentConfig cfg;
  const TrainingExample ex{random_image(7), 0.1, 0.5, 10.0, CameraId::Center};
  const TrainingExample s = apply_augmentation(ex, {false, 5, 0}, cfg);
  EXPECT_NEAR(s.steering, 0.15, 1e-12);
  EXPECT_EQ(s.image, translate(ex.image, 5, 0));
  EXPECT_EQ(apply_augmentation(ex, {false, 0, 3}, cfg).steering, 0.1);
  TrainingExample hi = ex;
  hi.steering = 0.98;
  EXPECT_EQ(apply_augmentation(hi, {false, 8, 0}, cfg).steering, 1.0);
}

TEST(Augment, DrawsWithinBoundsAndDeterministic) {
  const AugmentConfig cfg;
  Rng a(8), b(8);
  int flips = 0;
  for (int i = 0; i < 4000; ++i) {
    const AugmentDraw d = draw_augmentation(a, cfg);
    const AugmentDraw e = draw_augmentation(b, cfg);
    ASSERT_EQ(d.flip, e.flip);
    ASSERT_EQ(d.dx, e.dx);
    ASSERT_EQ(d.dy, e.dy);
    ASSERT_LE(std::abs(d.dx), cfg.max_dx);
    ASSERT_LE(std::abs(d.dy), cfg.max_dy);
    flips += d.flip;
  }
  EXPECT_NEAR(flips / 4000.0, 0.5, 0.03);
}
