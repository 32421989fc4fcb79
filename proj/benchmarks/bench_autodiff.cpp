#include <benchmark/benchmark.h>

#include <random>

#include "carl/compression.hpp"
#include "carl/losses.hpp"
#include "carl/nn.hpp"

using namespace carl;

namespace {

Tensor uniform(const Shape& shape, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Encoder enc = Encoder::mlp(EncoderSpec{}, rng);
  TaskHead head = TaskHead::make(enc.feature_dim(), 5, 1, rng);
  Samples s;
  s.inputs = uniform({batch, 20}, rng);
  for (std::size_t r = 0; r < batch; ++r) s.labels.push_back(static_cast<int>(r % 5));
  for (auto _ : state) {
    Tape tape;
    const Gradients g = tape.backward(task_loss(tape, enc, head, s, LossKind::cross_entropy));
    benchmark::DoNotOptimize(g);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(10)->Arg(15)->Arg(100);

void BM_Compress(benchmark::State& state) {
  const auto kind = static_cast<CompressionKind>(state.range(0));
  Rng rng(2);
  const Tensor f = uniform({10, 64, 8, 8}, rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(compress(tape.constant(f), kind).value());
  }
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_Compress)->DenseRange(0, 3);

void BM_Mmd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor a = uniform({n, 32}, rng), b = uniform({n, 32}, rng);
  for (auto _ : state) {
    Tape tape;
    Var x = tape.constant(a);
    benchmark::DoNotOptimize(mmd(x, tape.constant(b)).value.value().item());
  }
}
BENCHMARK(BM_Mmd)->Arg(5)->Arg(20)->Arg(80);

}  // namespace
