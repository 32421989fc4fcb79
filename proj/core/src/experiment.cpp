#include "carl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "carl/errors.hpp"
#include "json.hpp"

namespace carl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

const std::vector<std::string> kMetricOrder = {"forgetting", "avg_accuracy", "perf_drop"};

}  // namespace

TaskStreamSpec run_stream_spec(const RunConfig& config, std::uint64_t seed) {
  TaskStreamSpec spec = config.stream;
  spec.seed = config.stream.seed + seed;
  return spec;
}

RunResult run_single(const RunConfig& config, std::uint64_t seed) {
  const TaskStream stream = gen_stream(run_stream_spec(config, seed));
  return train_sequence(stream, run_train_config(config, seed), config.multitask);
}

std::string result_record(const RunConfig& config, const RunResult& r) {
  json rec;
  rec["config"] = json::parse(config_to_json(config, -1));
  rec["seed"] = r.seed;
  if (r.accuracy_matrix) {
    rec["eval_matrix"] = json::parse(r.accuracy_matrix->to_json());
    rec["loss_matrix"] = json::parse(r.loss_matrix.to_json());
  } else {
    rec["eval_matrix"] = json::parse(r.loss_matrix.to_json());
  }
  json metrics{{"forgetting", r.summary.forgetting}};
  if (r.summary.avg_accuracy) metrics["avg_accuracy"] = *r.summary.avg_accuracy;
  if (r.summary.perf_drop) metrics["perf_drop"] = *r.summary.perf_drop;
  rec["metrics"] = metrics;
  json drift = json::array();
  for (std::size_t i = 0; i < r.drift_trace.size(); ++i) {
    json per_task = json::object();
    for (const auto& [task, d] : r.drift_trace[i]) per_task[std::to_string(task)] = d;
    drift.push_back({{"after_task", i + 1}, {"per_task", per_task}});
  }
  rec["drift"] = drift;
  if (config.record_timing) rec["wall_time_s"] = r.wall_time_s;
  return rec.dump();
}

void validate_record(std::string_view line) {
  auto fail = [](const std::string& msg) { throw ValueError("result record: " + msg); };
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(e.what());
  }
  if (!j.is_object()) fail("not an object");
  for (const auto& item : j.items()) {
    static const std::set<std::string> allowed = {"config", "seed", "eval_matrix", "loss_matrix",
                                                  "metrics", "drift", "wall_time_s"};
    if (!allowed.contains(item.key())) fail("unexpected key '" + item.key() + "'");
  }
  for (const char* key : {"config", "seed", "eval_matrix", "metrics", "drift"}) {
    if (!j.contains(key)) fail(std::string("missing '") + key + "'");
  }
  if (!j["config"].is_object()) fail("config must be an object");
  if (!j["seed"].is_number_unsigned()) fail("seed must be a nonnegative integer");
  try {
    (void)EvalMatrix::from_json(j["eval_matrix"].dump());
    if (j.contains("loss_matrix")) (void)EvalMatrix::from_json(j["loss_matrix"].dump());
  } catch (const std::exception& e) {
    fail(e.what());
  }
  const json& m = j["metrics"];
  if (!m.is_object() || !m.contains("forgetting")) fail("metrics.forgetting missing");
  if (!m.contains("avg_accuracy") && !m.contains("perf_drop")) fail("metrics needs avg_accuracy or perf_drop");
  for (const auto& item : m.items()) {
    if (std::find(kMetricOrder.begin(), kMetricOrder.end(), item.key()) == kMetricOrder.end()) {
      fail("unknown metric '" + item.key() + "'");
    }
    if (!item.value().is_number()) fail("metric '" + item.key() + "' must be a number");
  }
  if (!j["drift"].is_array()) fail("drift must be an array");
  for (const json& d : j["drift"]) {
    if (!d.is_object() || !d.contains("after_task") || !d.contains("per_task") || !d["per_task"].is_object()) {
      fail("drift entries need after_task and per_task");
    }
    for (const auto& item : d["per_task"].items()) {
      if (!item.value().is_number()) fail("drift values must be numbers");
    }
  }
  if (j.contains("wall_time_s") && !j["wall_time_s"].is_number()) fail("wall_time_s must be a number");
}

std::vector<MetricAggregate> aggregate(std::span<const std::string> records) {
  std::map<std::string, std::vector<double>> values;
  for (const std::string& line : records) {
    const json j = json::parse(line);
    for (const auto& item : j.at("metrics").items()) values[item.key()].push_back(item.value().get<double>());
  }
  std::vector<MetricAggregate> out;
  for (const std::string& metric : kMetricOrder) {
    const auto it = values.find(metric);
    if (it == values.end()) continue;
    const auto& v = it->second;
    MetricAggregate a;
    a.metric = metric;
    a.n = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    a.mean = sum / static_cast<double>(a.n);
    if (a.n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - a.mean) * (x - a.mean);
      a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
    }
    out.push_back(a);
  }
  return out;
}

fs::path resolve_output_dir(const std::string& output) {
  fs::path p(output);
  if (p.is_relative()) {
    if (const char* base = std::getenv(kOutputDirEnv); base != nullptr && *base != '\0') p = fs::path(base) / p;
  }
  return p;
}

ExperimentOutput run_experiment(const RunConfig& config) {
  validate(config);
  ExperimentOutput out;
  const fs::path dir = resolve_output_dir(config.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValueError("cannot create output directory '" + dir.string() + "'");
  out.records_path = dir / "results.jsonl";
  out.summary_path = dir / "summary.csv";
  {
    std::ofstream probe(out.records_path, std::ios::app);
    if (!probe) throw ValueError("output path '" + out.records_path.string() + "' is not writable");
  }

  const std::size_t n = config.seeds.size();
  std::vector<std::string> records(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t k) {
    try {
      records[k] = result_record(config, run_single(config, config.seeds[k]));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const std::size_t jobs = std::min(config.jobs, n);
  if (jobs <= 1) {
    for (std::size_t k = 0; k < n; ++k) work(k);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t k;
          {
            std::lock_guard lock(mu);
            if (next == n) return;
            k = next++;
          }
          work(k);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  out.records = std::move(records);
  out.aggregates = aggregate(out.records);

  std::ofstream rec(out.records_path, std::ios::trunc);
  for (const std::string& line : out.records) rec << line << '\n';
  std::ofstream csv(out.summary_path, std::ios::trunc);
  csv << "method,memory,lambda_fm,strategy,compression,fm_loss,metric,mean,std,n\n";
  const TrainConfig& t = config.train;
  for (const MetricAggregate& a : out.aggregates) {
    csv << to_string(t.method.kind) << ',' << t.memory_per_task << ',' << fmt(t.method.lambda_fm) << ','
        << to_string(t.strategy) << ',' << to_string(t.compression) << ',' << to_string(t.fm_loss) << ','
        << a.metric << ',' << fmt(a.mean) << ',' << fmt(a.stddev) << ',' << a.n << '\n';
  }
  if (!rec || !csv) throw ValueError("failed writing results into '" + dir.string() + "'");
  return out;
}

std::vector<std::string> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot read results file '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    validate_record(line);
    lines.push_back(line);
  }
  if (lines.empty()) throw ValueError("results file '" + path.string() + "' holds no records");
  return lines;
}

ReportGrid report_grid(std::span<const std::string> records) {
  std::map<std::string, std::map<std::string, std::map<std::size_t, std::vector<std::string>>>> groups;
  for (const std::string& line : records) {
    const json j = json::parse(line);
    const std::string method = j.at("config").at("method").at("kind").get<std::string>();
    const std::size_t m = j.at("config").at("buffer").at("memory_per_task").get<std::size_t>();
    for (const auto& item : j.at("metrics").items()) groups[item.key()][method][m].push_back(line);
  }
  ReportGrid grid;
  for (const auto& [metric, by_method] : groups)
    for (const auto& [method, by_m] : by_method)
      for (const auto& [m, lines] : by_m) {
        for (const MetricAggregate& a : aggregate(lines)) {
          if (a.metric == metric) grid[metric][method][m] = {a.mean, a.stddev, a.n};
        }
      }
  return grid;
}

std::string report(std::span<const fs::path> paths) {
  std::vector<std::string> records;
  for (const fs::path& p : paths) {
    auto lines = read_records(p);
    records.insert(records.end(), lines.begin(), lines.end());
  }
  const ReportGrid grid = report_grid(records);
  std::ostringstream os;
  for (const std::string& metric : kMetricOrder) {
    const auto it = grid.find(metric);
    if (it == grid.end()) continue;
    std::set<std::size_t> memories;
    for (const auto& [method, by_m] : it->second)
      for (const auto& [m, cell] : by_m) memories.insert(m);
    os << metric << " (mean±std)\n";
    os << "method";
    for (std::size_t m : memories) os << " | m=" << m;
    os << '\n';
    for (const auto& [method, by_m] : it->second) {
      os << method;
      for (std::size_t m : memories) {
        const auto c = by_m.find(m);
        if (c == by_m.end()) {
          os << " | -";
        } else {
          os << " | " << fmt(c->second.mean, "%.6g") << "±" << fmt(c->second.stddev, "%.6g");
        }
      }
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace carl
