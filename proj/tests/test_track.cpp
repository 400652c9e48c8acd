#include <gtest/gtest.h>

#include "racelab/track.hpp"
#include "support/tempdir.hpp"

using namespace racelab;

namespace {

Track square(double side = 100.0) {
  return Track("sq", 6.0, {{0, 0}, {side, 0}, {side, side}, {0, side}});
}

// Brute-force nearest point on the densely sampled centerline.
std::pair<double, double> dense_nearest(const Track& t, Vec2 p, double step) {
  double best = 1e300, best_s = 0.0;
  for (double s = 0.0; s < t.total_length(); s += step) {
    const Pose q = t.point_at(s, 0.0);
    const double d = std::hypot(p.x - q.x, p.y - q.y);
    if (d < best) best = d, best_s = s;
  }
  return {best_s, best};
}

}  // namespace

TEST(Track, SquarePerimeter) { EXPECT_DOUBLE_EQ(square().total_length(), 400.0); }

TEST(Track, CumLengthStrictlyIncreasing) {
  for (const Track& t : {make_track_a(), make_track_b()}) {
    const auto& c = t.cum_length();
    ASSERT_EQ(c.size(), t.waypoints().size() + 1);
    EXPECT_EQ(c.front(), 0.0);
    for (std::size_t i = 1; i < c.size(); ++i) EXPECT_GT(c[i], c[i - 1]);
  }
}

TEST(Track, ParseErrors) {
  try {
    parse_track("name x\nhalf_width 6\n0 0\n1 0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("need at least 3 waypoints"), std::string::npos);
  }
  EXPECT_THROW(parse_track("name x\nhalf_width 6\n0 0\n1 zz\n2 2\n"), ParseError);
  EXPECT_THROW(parse_track("name x\nhalf_width 6\n0 0\n0 0\n1 1\n"), ParseError);
  EXPECT_THROW(parse_track("name x\nhalf_width -1\n0 0\n1 0\n1 1\n"), ParseError);
  try {
    parse_track("name x\nhalf_width 6\n0 0\n1 0\nbad\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos) << e.what();
  }
}

TEST(Track, BuiltinFileRoundTrip) {
  racelab::testkit::TempDir dir("track");
  for (const Track& t : {make_track_a(), make_track_b()}) {
    save_track(t, dir / "t.trk");
    EXPECT_EQ(load_track(dir / "t.trk"), t);
  }
}

TEST(Track, ProjectionOnAndBesideStraight) {
  const Track t = square();
  Projection p = t.project({50, 0});
  EXPECT_NEAR(p.lateral, 0.0, 1e-12);
  EXPECT_NEAR(p.station, 50.0, 1e-12);
  p = t.project({50, 3});  // travel is +x, so +y is left
  EXPECT_NEAR(p.lateral, 3.0, 1e-12);
  p = t.project({50, -3});
  EXPECT_NEAR(p.lateral, -3.0, 1e-12);
}

TEST(Track, ProjectionMatchesDenseSampling) {
  const Track t = make_track_b();
  Rng rng(5);
  for (int i = 0; i < 60; ++i) {
    const double s = rng.uniform(0.0, t.total_length());
    const double d = rng.uniform(-0.8, 0.8) * t.half_width();
    const Pose q = t.point_at(s, d);
    const Projection p = t.project({q.x, q.y});
    const auto [s_ref, dist_ref] = dense_nearest(t, {q.x, q.y}, 0.01);
    EXPECT_NEAR(std::abs(p.lateral), dist_ref, 0.02);
    double ds = std::abs(p.station - s_ref);
    ds = std::min(ds, t.total_length() - ds);
    EXPECT_LT(ds, 0.02 + 1e-9) << "s=" << s << " d=" << d;
  }
}

TEST(Track, PointAtRoundTrip) {
  for (const Track& t : {make_track_a(), make_track_b()}) {
    Rng rng(11);
    double worst = 0.0, worst_station = 0.0;
    int used = 0;
    while (used < 1000) {
      const double s = rng.uniform(0.0, t.total_length());
      const double d = rng.uniform(-0.8, 0.8) * t.half_width();
      // Away from corner neighborhoods: require a locally straight or smoothly
      // curved centerline, where the offset point projects back uniquely.
      if (std::abs(t.curvature_at(s)) * std::abs(d) > 0.5) continue;
      const Pose q = t.point_at(s, d);
      const Projection p = t.project({q.x, q.y});
      double ds = std::abs(p.station - s);
      ds = std::min(ds, t.total_length() - ds);
      worst = std::max(worst, std::abs(p.lateral - d));
      worst_station = std::max(worst_station, ds);
      ++used;
    }
    EXPECT_LT(worst, 0.02) << t.name();
    // Outside a polyline vertex the projection snaps to the vertex.
    EXPECT_LT(worst_station, 0.1) << t.name();
  }
}

TEST(Track, PointAtAnchorAndMirror) {
  const Track t = make_track_a();
  const Pose p0 = t.point_at(0.0, 0.0);
  EXPECT_DOUBLE_EQ(p0.x, t.waypoints()[0].x);
  EXPECT_DOUBLE_EQ(p0.y, t.waypoints()[0].y);
  const Pose c = t.point_at(1000.0, 0.0), l = t.point_at(1000.0, 2.0), r = t.point_at(1000.0, -2.0);
  EXPECT_NEAR((l.x + r.x) / 2.0, c.x, 1e-9);
  EXPECT_NEAR((l.y + r.y) / 2.0, c.y, 1e-9);
  // Both offsets are perpendicular to the tangent.
  const Vec2 n{l.x - r.x, l.y - r.y};
  EXPECT_NEAR(n.x * std::cos(c.heading) + n.y * std::sin(c.heading), 0.0, 1e-9);
}

TEST(Track, CenterlineProjectsToZeroLateral) {
  const Track t = make_track_b();
  for (double s = 1.0; s < t.total_length(); s += 7.3) {
    const Pose q = t.point_at(s, 0.0);
    EXPECT_NEAR(t.project({q.x, q.y}).lateral, 0.0, 1e-6);
  }
}

TEST(Track, StationsIncreaseAlongCenterline) {
  const Track t = make_track_a();
  double prev = -1.0;
  for (double s = 0.0; s < t.total_length() - 1.0; s += 1.0) {
    const Pose q = t.point_at(s, 0.0);
    const double st = t.project({q.x, q.y}).station;
    EXPECT_GT(st, prev);
    prev = st;
  }
}

TEST(Track, MirrorAcrossStraight) {
  const Track t = square();
  for (double d : {0.5, 2.0, 4.5}) {
    const double a = t.project({30.0, d}).lateral, b = t.project({30.0, -d}).lateral;
    EXPECT_DOUBLE_EQ(a, -b);
  }
}

TEST(Track, Curvature) {
  const Track a = make_track_a();
  EXPECT_NEAR(a.curvature_at(200.0), 0.0, 1e-9);
  EXPECT_NEAR(a.curvature_at(400.0 + 150.0 * kPi / 2.0), 1.0 / 150.0, 0.05 / 150.0);
  double max_k = 0.0;
  for (double s = 0.0; s < a.total_length(); s += 1.0) max_k = std::max(max_k, std::abs(a.curvature_at(s)));
  EXPECT_NEAR(max_k, 1.0 / 150.0, 0.05 / 150.0);
}

TEST(Track, BuiltinGeometry) {
  const auto [a, b] = builtin_tracks();
  EXPECT_NEAR(a.total_length(), 1600.0 + 2.0 * kPi * 150.0, 0.5);
  EXPECT_NEAR(a.total_length(), 2542.4, 0.5);
  EXPECT_NEAR(a.total_length() / 1609.344, 1.58, 0.01);
  EXPECT_EQ(a.half_width(), 6.0);
  EXPECT_EQ(b.half_width(), 6.0);
  EXPECT_GE(b.total_length(), 3500.0);
  EXPECT_LE(b.total_length(), 3900.0);
}

TEST(Track, TrackBHasSharpAlternatingTurns) {
  const Track b = make_track_b();
  // Group consecutive stations with |kappa| > 1/35 into turns.
  std::vector<std::pair<double, int>> turns;  // (max |kappa|, sign)
  bool in = false;
  for (double s = 0.0; s < b.total_length(); s += 0.5) {
    const double k = b.curvature_at(s);
    if (std::abs(k) > 1.0 / 35.0) {
      if (!in) turns.push_back({0.0, k > 0 ? 1 : -1});
      turns.back().first = std::max(turns.back().first, std::abs(k));
      in = true;
    } else {
      in = false;
    }
  }
  int sharp = 0, alternations = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].first >= 1.0 / 30.0 * 0.97) ++sharp;
    if (i > 0 && turns[i].second != turns[i - 1].second) ++alternations;
  }
  EXPECT_GE(sharp, 4);
  EXPECT_GE(alternations, 2);
}
