#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carl/tensor.hpp"

namespace carl {

enum class LossKind { cross_entropy, mse, l1 };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

inline bool is_classification(LossKind kind) { return kind == LossKind::cross_entropy; }

/// Supervised samples: inputs (N × d) plus integer labels (classification)
/// or a target matrix (N × k, regression).
struct Samples {
  Tensor inputs;
  std::vector<int> labels;
  Tensor targets;

  std::size_t size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
  bool empty() const { return size() == 0; }
  /// Rows `indices` in the given order (duplicates allowed).
  Samples select(std::span<const std::size_t> indices) const;
};

struct Task {
  int index = 1;
  LossKind loss = LossKind::cross_entropy;
  std::size_t output_dim = 1;
  Samples train;
  Samples test;
};

using TaskStream = std::vector<Task>;

}  // namespace carl
