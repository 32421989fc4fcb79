#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "carl/data.hpp"

namespace carl {

enum class StreamKind { split_gaussian_classification, random_linear_regression, mixed };

std::string_view to_string(StreamKind kind);
StreamKind parse_stream_kind(std::string_view name);

/// Synthetic task stream description.
struct TaskStreamSpec {
  StreamKind kind = StreamKind::split_gaussian_classification;
  std::size_t t = 5;
  std::size_t classes_per_task = 5;
  /// Regression target width.
  std::size_t output_dim = 3;
  std::size_t input_dim = 20;
  std::size_t train_per_task = 500;
  std::size_t test_per_task = 2000;
  std::uint64_t seed = 0;
  /// Std of samples around their class mean.
  double cluster_spread = 1.0;
  /// Std of the class means themselves.
  double mean_scale = 1.0;
  /// Std of the additive regression noise.
  double noise_std = 0.1;
  LossKind regression_loss = LossKind::mse;

  friend bool operator==(const TaskStreamSpec&, const TaskStreamSpec&) = default;
};

void validate(const TaskStreamSpec& spec);

/// Class-conditional Gaussian mean of (task, class), as used by gen_stream.
Tensor class_mean(const TaskStreamSpec& spec, std::size_t task_index, std::size_t cls);

/// Deterministic under spec.seed. Classification tasks draw class-conditional
/// Gaussians with classes unique to the task; regression tasks draw y = A·x + ε.
TaskStream gen_stream(const TaskStreamSpec& spec);

std::string stream_spec_to_json(const TaskStreamSpec& spec);
TaskStreamSpec stream_spec_from_json(std::string_view text);

/// Full dump of the generated data.
std::string stream_to_json(const TaskStream& stream);
TaskStream stream_from_json(std::string_view text);

}  // namespace carl
