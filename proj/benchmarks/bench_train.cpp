#include <benchmark/benchmark.h>

#include "carl/stream.hpp"
#include "carl/trainer.hpp"

using namespace carl;

namespace {

void BM_TrainSequence(benchmark::State& state) {
  const auto kind = static_cast<MethodKind>(state.range(0));
  const TaskStream stream = gen_stream(TaskStreamSpec{});
  TrainConfig c;
  c.method.kind = kind;
  for (auto _ : state) benchmark::DoNotOptimize(train_sequence(stream, c).summary.forgetting);
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_TrainSequence)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_JointStep(benchmark::State& state) {
  const TaskStream stream = gen_stream(TaskStreamSpec{});
  ContinualTrainer trainer(stream, TrainConfig{});
  for (int i = 1; i <= 4; ++i) {
    trainer.train_task(i);
    trainer.finish_task(i);
  }
  const std::size_t rows[] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Samples batch = stream[4].train.select(rows);
  for (auto _ : state) {
    const auto draws = trainer.draw_joint_replay(5);
    benchmark::DoNotOptimize(trainer.apply_step(stream[4], &batch, draws).loss);
  }
}
BENCHMARK(BM_JointStep);

}  // namespace
