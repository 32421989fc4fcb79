#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carl/compression.hpp"
#include "carl/data.hpp"
#include "carl/nn.hpp"
#include "carl/tensor.hpp"

namespace carl {

enum class FillStrategy { uniform, reservoir, hard, easy, high_variance, loss_eq, loss_eq_weighted };

std::string_view to_string(FillStrategy strategy);
FillStrategy parse_fill_strategy(std::string_view name);

/// Whether the strategy needs per-sample training losses recorded while the task trains.
bool needs_losses(FillStrategy strategy);

struct ReplayItem {
  Tensor x;
  int label = -1;  // classification target, -1 otherwise
  Tensor y;        // regression target, empty otherwise
  int task_index = 1;
  std::size_t source_index = 0;
  std::optional<Tensor> stored_feature;  // c(f) at the end of the item's task
  double weight = 1.0;
};

/// Indices into a task's training set plus optional per-item sampling weights (empty = all 1).
struct Selection {
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

/// Welford running mean and population variance (M2 / n).
struct WelfordStats {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x);
  double variance() const { return count == 0 ? 0.0 : m2 / static_cast<double>(count); }
};

/// Equal-width histogram between the observed min and max value.
struct LossHistogram {
  std::vector<double> edges;  // bins + 1, strictly increasing
  std::vector<std::size_t> counts;

  static LossHistogram build(std::span<const double> values, std::size_t bins = 10);
  std::size_t bin_of(double value) const;
  std::size_t total() const;
  /// Histogram of `values` over these bin edges (values outside are clamped to the end bins).
  std::vector<std::size_t> count(std::span<const double> values) const;
};

/// Per-task bookkeeping a filling strategy needs while a task trains.
class StrategyState {
 public:
  explicit StrategyState(FillStrategy strategy = FillStrategy::uniform, std::size_t histogram_bins = 10);

  FillStrategy strategy() const noexcept { return strategy_; }
  std::size_t histogram_bins() const noexcept { return bins_; }

  /// Resets the per-sample statistics for a new task with `n` training samples.
  void begin_task(int task_index, std::size_t n);
  int current_task() const noexcept { return task_; }

  /// Records the loss of `sample` observed during training.
  void record_loss(std::size_t sample, double loss, bool final_epoch);

  std::size_t& seen_count(int task_index) { return seen_[task_index]; }
  std::size_t seen(int task_index) const;

  const std::vector<WelfordStats>& variance_stats() const noexcept { return welford_; }
  /// Final-epoch losses; entries never observed are NaN.
  const std::vector<double>& final_losses() const noexcept { return final_losses_; }
  /// Histogram over the observed final-epoch losses.
  LossHistogram loss_histogram() const;

 private:
  FillStrategy strategy_;
  std::size_t bins_;
  int task_ = 0;
  std::map<int, std::size_t> seen_;
  std::vector<WelfordStats> welford_;
  std::vector<double> final_losses_;
};

/// Replay memory M: at most `m` items per task.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t m, std::uint64_t seed);

  std::size_t capacity_per_task() const noexcept { return m_; }
  std::vector<int> tasks() const;
  bool has_task(int task_index) const;
  /// Items for `task_index`; empty span if the task has none.
  std::span<const ReplayItem> items(int task_index) const;
  std::vector<ReplayItem>& mutable_items(int task_index);
  std::size_t total_size() const;

  /// Replaces the task's contents with `selection` rows of `data`.
  void store(int task_index, const Samples& data, const Selection& selection);

  /// Reservoir sampling step (Algorithm R) on the task's stream.
  void reservoir_insert(StrategyState& state, int task_index, ReplayItem item);

  bool features_attached(int task_index) const;
  void mark_features_attached(int task_index);

  void set_feature_weights(int task_index, std::vector<double> weights);
  /// Weights for weighted feature matching of the task, or nullptr.
  const Tensor* feature_weights(int task_index) const;

  Rng& rng() noexcept { return rng_; }

 private:
  std::size_t m_;
  Rng rng_;
  std::map<int, std::vector<ReplayItem>> per_task_;
  std::map<int, Tensor> fm_weights_;
  std::map<int, bool> featured_;
};

/// min(m, n) distinct indices chosen uniformly without replacement.
Selection fill_uniform(std::size_t n, std::size_t m, Rng& rng);
/// The m largest losses; ties go to the lower index.
Selection fill_hard(std::span<const double> losses, std::size_t m);
/// The m smallest losses; ties go to the lower index.
Selection fill_easy(std::span<const double> losses, std::size_t m);
/// The m largest running loss variances; every sample needs at least 2 observations.
Selection fill_high_variance(std::span<const WelfordStats> stats, std::size_t m);
/// Samples whose losses sit at evenly spaced values between the minimum and
/// maximum loss, giving a flat buffer loss histogram. In weighted mode each
/// item's weight is the source histogram height at its loss, normalised to mean 1.
Selection fill_loss_equalized(std::span<const double> losses, std::size_t m, bool weighted, std::size_t bins = 10);

/// Strategy dispatch for every strategy except reservoir (which fills while streaming).
Selection select_for_buffer(const StrategyState& state, std::size_t n, std::size_t m, Rng& rng);

/// Draws `batch_size` items with replacement, uniformly or proportionally to item weights.
std::vector<ReplayItem> sample_replay_batch(const ReplayBuffer& buffer, int task_index, std::size_t batch_size,
                                            Rng& rng, bool weighted);

/// Stores c(g(x)) under the current encoder on every item of the task. Throws
/// StateError if the task already carries features.
void attach_features(ReplayBuffer& buffer, int task_index, Encoder& encoder, CompressionKind compression,
                     FeatureSource source = FeatureSource::final_layer);

ReplayItem make_item(const Samples& data, std::size_t index, int task_index);

/// Inputs and targets of `items` stacked into a batch.
Samples to_samples(std::span<const ReplayItem> items);
/// Stored features of `items` stacked into (batch × dim).
Tensor stored_features(std::span<const ReplayItem> items);

/// Debug snapshot {"m":…, "tasks":{"<idx>":[{x, label|y, feature, weight, source_index}, …]}}.
std::string buffer_snapshot_json(const ReplayBuffer& buffer);

}  // namespace carl
