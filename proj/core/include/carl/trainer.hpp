#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "carl/compression.hpp"
#include "carl/data.hpp"
#include "carl/metrics.hpp"
#include "carl/nn.hpp"
#include "carl/optim.hpp"
#include "carl/replay.hpp"

namespace carl {

enum class MethodKind { sgd_only, er, car };
enum class ReplaySchedule { joint, probabilistic };

std::string_view to_string(MethodKind kind);
std::string_view to_string(ReplaySchedule schedule);
MethodKind parse_method_kind(std::string_view name);
ReplaySchedule parse_replay_schedule(std::string_view name);

struct Method {
  MethodKind kind = MethodKind::car;
  double lambda = 1.0;
  double lambda_fm = 5.0;
  ReplaySchedule schedule = ReplaySchedule::joint;
  double p_replay = 0.5;
  /// Joint schedule only: replay one uniformly drawn past task per step instead of all of them.
  bool sample_one_past_task = false;

  /// Coefficients in effect: sgd_only zeroes both, er zeroes lambda_fm.
  double effective_lambda() const { return kind == MethodKind::sgd_only ? 0.0 : lambda; }
  double effective_lambda_fm() const { return kind == MethodKind::car ? lambda_fm : 0.0; }
  bool replays() const { return effective_lambda() > 0.0 || effective_lambda_fm() > 0.0; }

  friend bool operator==(const Method&, const Method&) = default;
};

struct TrainConfig {
  Method method;
  EncoderSpec encoder;
  OptimizerSpec optimizer;
  std::size_t epochs = 1;
  std::size_t batch_size = 10;
  std::size_t replay_batch_size = 5;
  std::size_t memory_per_task = 20;
  FillStrategy strategy = FillStrategy::uniform;
  std::size_t histogram_bins = 10;
  CompressionKind compression = CompressionKind::none;
  FeatureSource feature_source = FeatureSource::final_layer;
  FmLossKind fm_loss = FmLossKind::l2;
  FmReduction fm_reduction = FmReduction::mean;
  /// Store features for every method so drift can be measured for ER and SGD too.
  bool track_drift = true;
  /// Iterations for the multitask reference; 0 means the sequential run's total step count.
  std::size_t multitask_iterations = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Checks cross-field validity against the stream. Throws ConfigError.
void validate(const TrainConfig& config, const TaskStream& stream);

/// Derives an independent generator for one purpose from a run seed.
Rng derive_rng(std::uint64_t seed, std::uint64_t purpose);

/// Shared encoder plus one head per task, all created up front so parameter addresses stay fixed.
struct Model {
  Encoder encoder;
  std::vector<TaskHead> heads;

  TaskHead& head(int task_index);
  std::vector<Parameter*> trainable(int task_index);
};

Model make_model(const TaskStream& stream, const EncoderSpec& spec, Rng& rng);

/// Cycles through shuffled permutations of [0, n) in chunks of `batch_size`.
class EpochBatcher {
 public:
  EpochBatcher(std::size_t n, std::size_t batch_size);
  /// Next chunk; starts a freshly shuffled epoch when the previous one is exhausted.
  std::vector<std::size_t> next(Rng& rng);
  std::size_t batches_per_epoch() const noexcept { return (n_ + batch_ - 1) / batch_; }

 private:
  std::size_t n_;
  std::size_t batch_;
  std::size_t pos_;
  std::vector<std::size_t> order_;
};

/// Replay samples drawn for one past task in one step.
struct ReplayDraw {
  int task_index = 1;
  std::vector<ReplayItem> items;
};

struct StepInfo {
  double loss = 0.0;
  /// Predictions for the current batch (empty for replay-only steps).
  Tensor current_predictions;
  /// ∂L/∂(compressed current features) per row, when requested.
  Tensor feature_grad;
};

struct Evaluation {
  double loss = 0.0;
  std::optional<double> accuracy;
};

/// Test loss (and argmax accuracy for classification) of h(g(x)) on `split`; nothing is trained.
Evaluation evaluate(Encoder& encoder, TaskHead& head, const Samples& split, LossKind kind);

/// Runs the sequential continual-learning loop one task at a time.
class ContinualTrainer {
 public:
  ContinualTrainer(const TaskStream& stream, TrainConfig config);

  /// Trains task `task_index` (1-based); earlier tasks must be finished.
  void train_task(int task_index);
  /// Fills the buffer for the task, stores feature weights and compressed features.
  void finish_task(int task_index);

  /// One optimisation step. The loss is
  ///   [current task loss] + (1/|replay|) Σ_draws [λ·replay loss + λ_fm·fm loss];
  /// the encoder and the current head are updated (the head only when the current batch is included).
  StepInfo apply_step(const Task& current, const Samples* batch, std::span<const ReplayDraw> replay,
                      bool want_feature_grad = false);

  /// Replay batches for one joint-schedule step of task `task_index`.
  std::vector<ReplayDraw> draw_joint_replay(int task_index);

  Model& model() noexcept { return model_; }
  ReplayBuffer& buffer() noexcept { return buffer_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::size_t steps_taken() const noexcept { return steps_; }

 private:
  const Task& task(int task_index) const;

  const TaskStream& stream_;
  TrainConfig config_;
  Rng init_rng_;
  Rng data_rng_;
  Rng replay_rng_;
  Model model_;
  ReplayBuffer buffer_;
  Optimizer optimizer_;
  StrategyState strategy_;
  std::optional<FeatureWeightAccumulator> weight_acc_;
  int trained_ = 0;
  int finished_ = 0;
  std::size_t steps_ = 0;
};

struct MetricSummary {
  double forgetting = 0.0;
  std::optional<double> avg_accuracy;
  std::optional<double> perf_drop;
};

struct RunResult {
  EvalMatrix loss_matrix{1, EvalKind::loss};
  std::optional<EvalMatrix> accuracy_matrix;
  /// Entry i-1 holds the drift of every task j < i right after training task i.
  std::vector<std::map<int, double>> drift_trace;
  std::optional<MultitaskReference> multitask;
  MetricSummary summary;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
};

/// Recomputes the summary from the eval matrices (accuracy metrics when present, loss metrics otherwise).
MetricSummary summarize(const EvalMatrix& losses, const std::optional<EvalMatrix>& accuracy,
                        const std::optional<MultitaskReference>& multitask);

/// Trains every task in order, evaluating all seen tasks after each one.
RunResult train_sequence(const TaskStream& stream, const TrainConfig& config, bool with_multitask = false);

/// Trains one model on minibatches interleaved uniformly across all tasks and
/// returns its per-task test losses.
MultitaskReference train_multitask(const TaskStream& stream, const TrainConfig& config);

}  // namespace carl
