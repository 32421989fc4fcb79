#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carl/stream.hpp"
#include "carl/trainer.hpp"

namespace carl {

/// One experiment: a stream, a training setup, and the seeds to run it under.
/// TrainConfig::seed is ignored here; each run takes its seed from `seeds`.
struct RunConfig {
  TaskStreamSpec stream;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  /// Also train the multitask reference and report performance drop.
  bool multitask = false;
  /// Output directory; relative paths resolve against CAR_OUTPUT_DIR when set.
  std::string output = "results";
  /// Adds "wall_time_s" to each record (records then differ between runs).
  bool record_timing = false;
  /// Seeds run concurrently on this many threads.
  std::size_t jobs = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Validates every section, including the training setup against the stream shape.
void validate(const RunConfig& config);

/// Nested JSON document with sections stream, model, method, buffer, features,
/// optimizer, training and run. Missing keys keep their defaults.
std::string config_to_json(const RunConfig& config, int indent = 2);
RunConfig config_from_json(std::string_view text);
RunConfig load_config(const std::string& path);

/// Command-line values that replace the file's.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::size_t> memory;
  std::optional<double> lambda_fm;
  std::optional<std::string> strategy;
  std::optional<std::string> compression;
  std::optional<std::string> fm_loss;
  std::optional<std::string> output;
  std::optional<std::size_t> jobs;
};

/// A seed override replaces the whole seed list with that one seed.
void apply_overrides(RunConfig& config, const ConfigOverrides& overrides);

/// TrainConfig for one run of `config` under `seed`.
TrainConfig run_train_config(const RunConfig& config, std::uint64_t seed);

}  // namespace carl
