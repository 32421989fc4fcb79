#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carl/compression.hpp"
#include "carl/nn.hpp"
#include "carl/replay.hpp"

namespace carl {

enum class EvalKind { loss, accuracy };

std::string_view to_string(EvalKind kind);
EvalKind parse_eval_kind(std::string_view name);

/// ℓ_test(i, j) or Acc(i, j): task j evaluated with the model snapshot taken
/// after training task i. Indices are 1-based; entry (i, j) exists only for j <= i
/// and is written exactly once.
class EvalMatrix {
 public:
  EvalMatrix(std::size_t t, EvalKind kind);

  std::size_t tasks() const noexcept { return t_; }
  EvalKind kind() const noexcept { return kind_; }

  void set(std::size_t i, std::size_t j, double value);
  bool has(std::size_t i, std::size_t j) const;
  std::optional<double> get(std::size_t i, std::size_t j) const;
  /// Throws if the entry is missing.
  double at(std::size_t i, std::size_t j) const;

  /// {"kind": "loss"|"accuracy", "t": t, "entries": [[i, j, value], ...]} in row-major order.
  std::string to_json() const;
  static EvalMatrix from_json(std::string_view text);

  friend bool operator==(const EvalMatrix&, const EvalMatrix&) = default;

 private:
  std::size_t index(std::size_t i, std::size_t j) const;

  std::size_t t_;
  EvalKind kind_;
  std::vector<std::optional<double>> values_;
};

/// ℓ^MT_test(i) per task, from a model trained on all tasks jointly.
struct MultitaskReference {
  std::vector<double> mt_losses;
};

/// Mean relative loss increase between each task's own checkpoint and the final model, in percent.
double forgetting_loss(const EvalMatrix& losses);
/// Mean relative gap between the final model's loss and the multitask reference, in percent.
double performance_drop(const EvalMatrix& losses, const MultitaskReference& ref);
/// (1/t) Σ_i max_{j ∈ [i, t]} [Acc(j, i) − Acc(t, i)].
double forgetting_accuracy(const EvalMatrix& accuracy);
/// Mean of the final row.
double avg_accuracy(const EvalMatrix& accuracy);

/// Mean Euclidean distance, per featured task, between each item's stored
/// compressed feature and c(g(x)) under the current encoder.
std::map<int, double> feature_drift(const ReplayBuffer& buffer, Encoder& encoder, CompressionKind compression,
                                  FeatureSource source = FeatureSource::final_layer);

}  // namespace carl
