#include <gtest/gtest.h>

#include "racelab/vehicle.hpp"

using namespace racelab;

TEST(Vehicle, StraightMotion) {
  CarState s;
  s.speed = 10.0;
  for (int i = 0; i < 5; ++i) s = step(s, 0.0, 0.0, DriveMode::fixed_speed(10.0), {});
  EXPECT_NEAR(s.x, 1.0, 1e-12);
  EXPECT_EQ(s.y, 0.0);
  EXPECT_EQ(s.heading, 0.0);
}

TEST(Vehicle, FullLockYawRate) {
  const VehicleParams p;
  CarState s;
  s.speed = 10.0;
  const CarState n = step(s, 1.0, 0.0, DriveMode::fixed_speed(10.0), p);
  const double radius = p.wheelbase / std::tan(p.max_steer_angle);
  EXPECT_NEAR(radius, 5.36, 0.01);
  EXPECT_NEAR(std::abs(n.heading) / p.dt_sim, 1.866, 1e-3);
  EXPECT_LT(n.heading, 0.0);  // +1 steers right
}

TEST(Vehicle, TerminalSpeed) {
  const VehicleParams p;
  CarState s;
  const int steps = static_cast<int>(std::lround(120.0 / p.dt_sim));
  for (int i = 0; i < steps; ++i) s = step(s, 0.0, 1.0, DriveMode::throttle(), p);
  EXPECT_NEAR(s.speed, p.a_max / p.k_drag, 1e-3);
  EXPECT_NEAR(mps_to_mph(s.speed), 89.9, 0.1);
}

TEST(Vehicle, SpeedBoundsInThrottleMode) {
  const VehicleParams p;
  Rng rng(3);
  CarState s;
  for (int i = 0; i < 20000; ++i) {
    s = step(s, rng.uniform(-1, 1), rng.uniform(0, 1), DriveMode::throttle(), p);
    ASSERT_GE(s.speed, 0.0);
    ASSERT_LE(s.speed, p.a_max / p.k_drag + 1e-9);
  }
}

TEST(Vehicle, FixedSpeedHeldExactly) {
  CarState s;
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    s = step(s, rng.uniform(-1, 1), rng.uniform(0, 1), DriveMode::fixed_speed(22.352), {});
    ASSERT_EQ(s.speed, 22.352);
  }
}

TEST(Vehicle, InputsClamped) {
  CarState s;
  s.speed = 5.0;
  const CarState a = step(s, 3.0, 7.0, DriveMode::throttle(), {});
  const CarState b = step(s, 1.0, 1.0, DriveMode::throttle(), {});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.last_steering, 1.0);
  EXPECT_EQ(a.last_throttle, 1.0);
}

TEST(Vehicle, NonFiniteStateRejected) {
  CarState s;
  s.x = std::nan("");
  EXPECT_THROW(step(s, 0, 0, DriveMode::throttle(), {}), SimulationError);
}

TEST(Vehicle, Deterministic) {
  CarState s;
  s.speed = 12.0;
  EXPECT_EQ(step(s, 0.3, 0.4, DriveMode::throttle(), {}), step(s, 0.3, 0.4, DriveMode::throttle(), {}));
}

TEST(Vehicle, CircleCloses) {
  const VehicleParams p;
  for (double u : {0.2, 0.5, 1.0}) {
    const double v = 10.0;
    const double radius = p.wheelbase / std::tan(u * p.max_steer_angle);
    const int steps = static_cast<int>(std::lround(2.0 * kPi * radius / v / p.dt_sim));
    CarState s;
    s.speed = v;
    for (int i = 0; i < steps; ++i) s = step(s, u, 0.0, DriveMode::fixed_speed(v), p);
    // One step of arc is the resolution of the integer step count.
    EXPECT_LT(std::hypot(s.x, s.y), v * p.dt_sim) << "u=" << u;
  }
}

TEST(Vehicle, ControlPeriodIsFiveSteps) {
  CarState s;
  s.speed = 10.0;
  CarState manual = s;
  for (int i = 0; i < 5; ++i) manual = step(manual, 0.2, 0.5, DriveMode::throttle(), {});
  EXPECT_EQ(advance_control_period(s, 0.2, 0.5, DriveMode::throttle(), {}), manual);
  EXPECT_NEAR(manual.time, kControlPeriod, 1e-12);
}

TEST(Units, MphConversion) {
  EXPECT_EQ(mph_to_mps(0.0), 0.0);
  EXPECT_DOUBLE_EQ(mph_to_mps(80.0), 35.7632);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(0.0, 200.0);
    EXPECT_NEAR(mps_to_mph(mph_to_mps(v)), v, 1e-12 * v);
  }
}
