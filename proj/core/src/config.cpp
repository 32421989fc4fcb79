#include "carl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "carl/errors.hpp"
#include "json.hpp"

namespace carl {

using nlohmann::json;

namespace {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

std::string str(std::string_view s) { return std::string(s); }

/// Rejects keys outside `allowed` so typos fail loudly.
void check_keys(const json& section, const std::string& name, std::set<std::string> allowed) {
  if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (const auto& item : section.items()) {
    if (!allowed.contains(item.key())) throw ConfigError("unknown key '" + name + "." + item.key() + "'");
  }
}

template <class T>
void read(const json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

template <class Parse, class T>
void read_enum(const json& section, const char* key, T& out, Parse parse) {
  if (section.contains(key)) out = parse(section.at(key).get<std::string>());
}

}  // namespace

void validate(const RunConfig& c) {
  validate(c.stream);
  if (c.seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (c.jobs == 0) throw ConfigError("run.jobs must be at least 1");
  if (c.output.empty()) throw ConfigError("run.output must not be empty");
  if (c.train.encoder.input_dim != c.stream.input_dim) {
    throw ConfigError("model input_dim differs from stream.input_dim");
  }
  // Shape checks against a tiny stand-in stream so no data is generated here.
  TaskStreamSpec probe = c.stream;
  probe.train_per_task = 1;
  probe.test_per_task = 1;
  validate(c.train, gen_stream(probe));
}

std::string config_to_json(const RunConfig& c, int indent) {
  const TrainConfig& t = c.train;
  json j;
  j["stream"] = json::parse(stream_spec_to_json(c.stream));
  j["model"] = {{"hidden", t.encoder.hidden},
                {"feature_shape", t.encoder.feature_shape},
                {"hidden_activation", activation_name(t.encoder.hidden_activation)},
                {"feature_activation", activation_name(t.encoder.feature_activation)}};
  j["method"] = {{"kind", str(to_string(t.method.kind))},
                 {"lambda", t.method.lambda},
                 {"lambda_fm", t.method.lambda_fm},
                 {"schedule", str(to_string(t.method.schedule))},
                 {"p_replay", t.method.p_replay},
                 {"sample_one_past_task", t.method.sample_one_past_task}};
  j["buffer"] = {{"memory_per_task", t.memory_per_task},
                 {"strategy", str(to_string(t.strategy))},
                 {"histogram_bins", t.histogram_bins}};
  j["features"] = {{"compression", str(to_string(t.compression))},
                   {"source", str(to_string(t.feature_source))},
                   {"fm_loss", str(to_string(t.fm_loss))},
                   {"fm_reduction", str(to_string(t.fm_reduction))},
                   {"track_drift", t.track_drift}};
  j["optimizer"] = {{"kind", optimizer_name(t.optimizer.kind)},
                    {"learning_rate", t.optimizer.learning_rate},
                    {"beta1", t.optimizer.beta1},
                    {"beta2", t.optimizer.beta2},
                    {"epsilon", t.optimizer.epsilon}};
  j["training"] = {{"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"replay_batch_size", t.replay_batch_size},
                   {"multitask", c.multitask},
                   {"multitask_iterations", t.multitask_iterations}};
  j["run"] = {{"seeds", c.seeds}, {"output", c.output}, {"record_timing", c.record_timing}, {"jobs", c.jobs}};
  return j.dump(indent);
}

RunConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j, "config", {"stream", "model", "method", "buffer", "features", "optimizer", "training", "run"});

  RunConfig c;
  TrainConfig& t = c.train;
  try {
    if (j.contains("stream")) c.stream = stream_spec_from_json(j.at("stream").dump());
    t.encoder.input_dim = c.stream.input_dim;
    if (j.contains("model")) {
      const json& s = j.at("model");
      check_keys(s, "model", {"hidden", "feature_shape", "hidden_activation", "feature_activation"});
      read(s, "hidden", t.encoder.hidden);
      read(s, "feature_shape", t.encoder.feature_shape);
      read_enum(s, "hidden_activation", t.encoder.hidden_activation, parse_activation);
      read_enum(s, "feature_activation", t.encoder.feature_activation, parse_activation);
    }
    if (j.contains("method")) {
      const json& s = j.at("method");
      check_keys(s, "method", {"kind", "lambda", "lambda_fm", "schedule", "p_replay", "sample_one_past_task"});
      read_enum(s, "kind", t.method.kind, [](const std::string& n) { return parse_method_kind(n); });
      read(s, "lambda", t.method.lambda);
      read(s, "lambda_fm", t.method.lambda_fm);
      read_enum(s, "schedule", t.method.schedule, [](const std::string& n) { return parse_replay_schedule(n); });
      read(s, "p_replay", t.method.p_replay);
      read(s, "sample_one_past_task", t.method.sample_one_past_task);
    }
    if (j.contains("buffer")) {
      const json& s = j.at("buffer");
      check_keys(s, "buffer", {"memory_per_task", "strategy", "histogram_bins"});
      read(s, "memory_per_task", t.memory_per_task);
      read_enum(s, "strategy", t.strategy, [](const std::string& n) { return parse_fill_strategy(n); });
      read(s, "histogram_bins", t.histogram_bins);
    }
    if (j.contains("features")) {
      const json& s = j.at("features");
      check_keys(s, "features", {"compression", "source", "fm_loss", "fm_reduction", "track_drift"});
      read_enum(s, "compression", t.compression, [](const std::string& n) { return parse_compression_kind(n); });
      read_enum(s, "source", t.feature_source, [](const std::string& n) { return parse_feature_source(n); });
      read_enum(s, "fm_loss", t.fm_loss, [](const std::string& n) { return parse_fm_loss_kind(n); });
      read_enum(s, "fm_reduction", t.fm_reduction, [](const std::string& n) { return parse_fm_reduction(n); });
      read(s, "track_drift", t.track_drift);
    }
    if (j.contains("optimizer")) {
      const json& s = j.at("optimizer");
      check_keys(s, "optimizer", {"kind", "learning_rate", "beta1", "beta2", "epsilon"});
      read_enum(s, "kind", t.optimizer.kind, parse_optimizer);
      read(s, "learning_rate", t.optimizer.learning_rate);
      read(s, "beta1", t.optimizer.beta1);
      read(s, "beta2", t.optimizer.beta2);
      read(s, "epsilon", t.optimizer.epsilon);
    }
    if (j.contains("training")) {
      const json& s = j.at("training");
      check_keys(s, "training", {"epochs", "batch_size", "replay_batch_size", "multitask", "multitask_iterations"});
      read(s, "epochs", t.epochs);
      read(s, "batch_size", t.batch_size);
      read(s, "replay_batch_size", t.replay_batch_size);
      read(s, "multitask", c.multitask);
      read(s, "multitask_iterations", t.multitask_iterations);
    }
    if (j.contains("run")) {
      const json& s = j.at("run");
      check_keys(s, "run", {"seeds", "output", "record_timing", "jobs"});
      read(s, "seeds", c.seeds);
      read(s, "output", c.output);
      read(s, "record_timing", c.record_timing);
      read(s, "jobs", c.jobs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void apply_overrides(RunConfig& c, const ConfigOverrides& o) {
  if (o.seed) c.seeds = {*o.seed};
  if (o.method) c.train.method.kind = parse_method_kind(*o.method);
  if (o.memory) c.train.memory_per_task = *o.memory;
  if (o.lambda_fm) c.train.method.lambda_fm = *o.lambda_fm;
  if (o.strategy) c.train.strategy = parse_fill_strategy(*o.strategy);
  if (o.compression) c.train.compression = parse_compression_kind(*o.compression);
  if (o.fm_loss) c.train.fm_loss = parse_fm_loss_kind(*o.fm_loss);
  if (o.output) c.output = *o.output;
  if (o.jobs) c.jobs = *o.jobs;
}

TrainConfig run_train_config(const RunConfig& config, std::uint64_t seed) {
  TrainConfig t = config.train;
  t.encoder.input_dim = config.stream.input_dim;
  t.seed = seed;
  return t;
}

}  // namespace carl
