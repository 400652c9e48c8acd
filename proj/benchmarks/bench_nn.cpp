#include <benchmark/benchmark.h>

#include "racelab/nn.hpp"

namespace {

racelab::TensorD random_batch(std::size_t n, std::uint64_t seed) {
  racelab::Rng rng(seed);
  racelab::TensorD batch({n, 1, 32, 64});
  for (double& v : batch.data) v = rng.uniform();
  return batch;
}

void BM_Forward(benchmark::State& state) {
  const auto net = racelab::init_network("steering_net", 1);
  const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(racelab::forward(net, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(100);

void BM_TrainStep(benchmark::State& state) {
  auto net = racelab::init_network("steering_net", 1);
  const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 2);
  racelab::TensorD target({batch.rows(), 1}, 0.1);
  auto adam = racelab::AdamState::for_network(net);
  racelab::ForwardCache cache;
  racelab::Gradients grads;
  for (auto _ : state) {
    const auto out = racelab::forward(net, batch, &cache);
    const auto loss = racelab::mse(out, target);
    racelab::backward(net, cache, loss.grad, grads);
    racelab::adam_step(net, grads, adam);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_TrainStepFrozenConv(benchmark::State& state) {
  const auto steer = racelab::init_network("steering_net", 1);
  auto net = racelab::transplant_conv(racelab::init_network("throttle_head", 2), steer);
  const auto batch = random_batch(100, 2);
  racelab::TensorD target({batch.rows(), 1}, 0.5);
  auto adam = racelab::AdamState::for_network(net);
  racelab::ForwardCache cache;
  racelab::Gradients grads;
  for (auto _ : state) {
    const auto out = racelab::forward(net, batch, &cache);
    const auto loss = racelab::mse(out, target);
    racelab::backward(net, cache, loss.grad, grads);
    racelab::adam_step(net, grads, adam);
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_TrainStepFrozenConv)->Unit(benchmark::kMillisecond);

}  // namespace
