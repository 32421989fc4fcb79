#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "carl/config.hpp"
#include "carl/experiment.hpp"
#include "carl/stream.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning replay experiments (ER / CAR) on synthetic task streams"};
  app.require_subcommand(1);

  std::string config_path;
  carl::ConfigOverrides ov;
  std::uint64_t seed = 0;
  std::string method, strategy, compression, fm_loss, out;
  std::size_t memory = 0, jobs = 0;
  double lambda_fm = 0.0;
  bool print_config = false;

  auto* run = app.add_subcommand("run", "Run every seed of a config, write results.jsonl and summary.csv");
  run->add_option("config", config_path, "JSON config file (omit for defaults)");
  auto* o_seed = run->add_option("--seed", seed, "Run only this seed");
  auto* o_method = run->add_option("--method", method, "sgd | er | car");
  auto* o_memory = run->add_option("--memory", memory, "Buffer items per task");
  auto* o_lfm = run->add_option("--lambda-fm", lambda_fm, "Feature-matching coefficient");
  auto* o_strategy = run->add_option("--strategy", strategy, "uniform | reservoir | hard | easy | high_variance | loss_eq | loss_eq_weighted");
  auto* o_comp = run->add_option("--compression", compression, "none | spatial | channel | spatial_channel");
  auto* o_fm = run->add_option("--fm-loss", fm_loss, "l2 | l1 | l1_plus_l2 | weighted_l1 | weighted_l2 | mmd");
  auto* o_out = run->add_option("--out", out, "Output directory");
  auto* o_jobs = run->add_option("--jobs", jobs, "Seeds run in parallel");
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");

  std::vector<std::string> result_paths;
  auto* rep = app.add_subcommand("report", "Print a method x memory table from result files");
  rep->add_option("results", result_paths, "results.jsonl files")->required()->check(CLI::ExistingFile);

  std::string spec_path, stream_out;
  auto* gen = app.add_subcommand("gen-stream", "Generate a task stream from a stream spec and write it as JSON");
  gen->add_option("spec", spec_path, "Stream spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("out", stream_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      carl::RunConfig config = config_path.empty() ? carl::RunConfig{} : carl::load_config(config_path);
      if (*o_seed) ov.seed = seed;
      if (*o_method) ov.method = method;
      if (*o_memory) ov.memory = memory;
      if (*o_lfm) ov.lambda_fm = lambda_fm;
      if (*o_strategy) ov.strategy = strategy;
      if (*o_comp) ov.compression = compression;
      if (*o_fm) ov.fm_loss = fm_loss;
      if (*o_out) ov.output = out;
      if (*o_jobs) ov.jobs = jobs;
      carl::apply_overrides(config, ov);
      carl::validate(config);
      if (print_config) {
        std::cout << carl::config_to_json(config) << '\n';
        return 0;
      }
      const auto result = carl::run_experiment(config);
      for (const auto& a : result.aggregates) {
        std::cout << a.metric << ": " << a.mean << " ± " << a.stddev << " (n=" << a.n << ")\n";
      }
      std::cout << "records: " << result.records_path.string() << '\n'
                << "summary: " << result.summary_path.string() << '\n';
    } else if (*rep) {
      std::vector<std::filesystem::path> paths(result_paths.begin(), result_paths.end());
      std::cout << carl::report(paths);
    } else if (*gen) {
      const auto spec = carl::stream_spec_from_json(slurp(spec_path));
      std::ofstream file(stream_out);
      if (!file) throw std::runtime_error("cannot write '" + stream_out + "'");
      file << carl::stream_to_json(carl::gen_stream(spec)) << '\n';
      if (!file) throw std::runtime_error("failed writing '" + stream_out + "'");
    }
  } catch (const std::exception& e) {
    std::cerr << "carl: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
