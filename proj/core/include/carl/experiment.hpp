#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "carl/config.hpp"
#include "carl/trainer.hpp"

namespace carl {

/// Environment variable that relative output paths resolve against.
inline constexpr const char* kOutputDirEnv = "CAR_OUTPUT_DIR";

/// The stream a run uses: the configured stream reseeded by the run seed.
TaskStreamSpec run_stream_spec(const RunConfig& config, std::uint64_t seed);

/// One run under `seed`.
RunResult run_single(const RunConfig& config, std::uint64_t seed);

/// One JSON line:
/// {"config":{...},"seed":n,"eval_matrix":{...},"loss_matrix":{...},
///  "metrics":{"forgetting":f,"avg_accuracy":f,"perf_drop":f},
///  "drift":[{"after_task":i,"per_task":{"j":d,...}},...],"wall_time_s":f}
/// "loss_matrix" appears only when eval_matrix holds accuracies; "wall_time_s"
/// only when timing is recorded.
std::string result_record(const RunConfig& config, const RunResult& result);

/// Throws ValueError when `line` does not follow the record schema.
void validate_record(std::string_view line);

struct MetricAggregate {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
  std::size_t n = 0;
};

/// Mean and std of each metric over the records.
std::vector<MetricAggregate> aggregate(std::span<const std::string> records);

struct ExperimentOutput {
  std::filesystem::path records_path;
  std::filesystem::path summary_path;
  std::vector<std::string> records;
  std::vector<MetricAggregate> aggregates;
};

/// Resolves config.output (against CAR_OUTPUT_DIR if relative and set).
std::filesystem::path resolve_output_dir(const std::string& output);

/// Validates the config, runs every seed (config.jobs at a time), then writes
/// results.jsonl and summary.csv into the output directory.
ExperimentOutput run_experiment(const RunConfig& config);

/// Method × memory grid of metric mean±std over every record in `paths`.
std::string report(std::span<const std::filesystem::path> paths);

struct ReportCell {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

/// metric -> method -> memory -> cell.
using ReportGrid = std::map<std::string, std::map<std::string, std::map<std::size_t, ReportCell>>>;
ReportGrid report_grid(std::span<const std::string> records);

std::vector<std::string> read_records(const std::filesystem::path& path);

}  // namespace carl
