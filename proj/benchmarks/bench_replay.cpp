#include <benchmark/benchmark.h>

#include <random>

#include "carl/replay.hpp"

using namespace carl;

namespace {

std::vector<double> random_losses(std::size_t n) {
  Rng rng(4);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  for (double& x : v) x = e(rng);
  return v;
}

void BM_FillUniform(benchmark::State& state) {
  Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(fill_uniform(500, static_cast<std::size_t>(state.range(0)), rng));
}
BENCHMARK(BM_FillUniform)->Arg(20)->Arg(100);

void BM_FillHard(benchmark::State& state) {
  const auto losses = random_losses(500);
  for (auto _ : state) benchmark::DoNotOptimize(fill_hard(losses, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_FillHard)->Arg(20)->Arg(100);

void BM_FillLossEqualized(benchmark::State& state) {
  const auto losses = random_losses(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fill_loss_equalized(losses, 50, true));
}
BENCHMARK(BM_FillLossEqualized)->Arg(500)->Arg(5000);

void BM_Reservoir(benchmark::State& state) {
  Samples data;
  data.inputs = Tensor(Shape{500, 20});
  data.labels.assign(500, 0);
  ReplayBuffer buffer(20, 6);
  for (auto _ : state) {
    StrategyState s(FillStrategy::reservoir);
    s.begin_task(1, 500);
    buffer.mutable_items(1).clear();
    for (std::size_t i = 0; i < 500; ++i) buffer.reservoir_insert(s, 1, make_item(data, i, 1));
  }
  state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_Reservoir);

}  // namespace
