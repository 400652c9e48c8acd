#include <benchmark/benchmark.h>

#include "racelab/vision.hpp"

namespace {

void BM_Render(benchmark::State& state) {
  const auto track = racelab::make_track_b();
  const racelab::Renderer renderer(track);
  auto car = racelab::start_state(track, 100.0, 0.5, 20.0);
  for (auto _ : state) benchmark::DoNotOptimize(renderer.render(car, racelab::CameraId::Center));
}
BENCHMARK(BM_Render);

void BM_Project(benchmark::State& state) {
  const auto track = racelab::make_track_b();
  racelab::Rng rng(3);
  double s = 0.0;
  for (auto _ : state) {
    s = track.wrap(s + 7.3);
    const auto p = track.point_at(s, rng.uniform(-4.0, 4.0));
    benchmark::DoNotOptimize(track.project({p.x, p.y}));
  }
}
BENCHMARK(BM_Project);

void BM_ControlPeriod(benchmark::State& state) {
  const racelab::VehicleParams params;
  racelab::CarState car;
  car.speed = 20.0;
  for (auto _ : state) {
    car = racelab::advance_control_period(car, 0.01, 0.5, racelab::DriveMode::throttle(), params);
    benchmark::DoNotOptimize(car);
  }
}
BENCHMARK(BM_ControlPeriod);

}  // namespace
