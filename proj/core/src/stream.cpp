#include "carl/stream.hpp"

#include <cmath>
#include <random>

#include "carl/errors.hpp"
#include "carl/nn.hpp"
#include "json.hpp"

namespace carl {

using nlohmann::json;

std::string_view to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::split_gaussian_classification: return "split_gaussian_classification";
    case StreamKind::random_linear_regression: return "random_linear_regression";
    case StreamKind::mixed: return "mixed";
  }
  return "?";
}

StreamKind parse_stream_kind(std::string_view name) {
  if (name == "split_gaussian_classification") return StreamKind::split_gaussian_classification;
  if (name == "random_linear_regression") return StreamKind::random_linear_regression;
  if (name == "mixed") return StreamKind::mixed;
  throw ConfigError("unknown stream kind '" + std::string(name) + "'");
}

void validate(const TaskStreamSpec& s) {
  auto fail = [](const std::string& msg) { throw ConfigError("stream: " + msg); };
  if (s.t == 0) fail("t must be at least 1");
  if (s.input_dim == 0) fail("input_dim must be positive");
  if (s.train_per_task == 0 || s.test_per_task == 0) fail("samples per task must be positive");
  if (s.kind != StreamKind::random_linear_regression && s.classes_per_task < 2) fail("classes_per_task must be at least 2");
  if (s.kind != StreamKind::split_gaussian_classification && s.output_dim == 0) fail("output_dim must be positive");
  if (!(s.cluster_spread >= 0.0) || !std::isfinite(s.cluster_spread)) fail("cluster_spread must be finite and >= 0");
  if (!(s.mean_scale >= 0.0) || !std::isfinite(s.mean_scale)) fail("mean_scale must be finite and >= 0");
  if (!(s.noise_std >= 0.0) || !std::isfinite(s.noise_std)) fail("noise_std must be finite and >= 0");
  if (is_classification(s.regression_loss)) fail("regression_loss must be mse or l1");
}

namespace {

Rng keyed_rng(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), a, b, c};
  return Rng(seq);
}

bool is_classification_task(const TaskStreamSpec& spec, std::size_t task_index) {
  switch (spec.kind) {
    case StreamKind::split_gaussian_classification: return true;
    case StreamKind::random_linear_regression: return false;
    case StreamKind::mixed: return task_index % 2 == 1;
  }
  return true;
}

Samples sample_classification(const TaskStreamSpec& spec, const std::vector<Tensor>& means, std::size_t n, Rng& rng) {
  const std::size_t d = spec.input_dim;
  const std::size_t k = means.size();
  std::normal_distribution<double> noise(0.0, 1.0);
  Samples s;
  s.inputs = Tensor(Shape{n, d});
  s.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t cls = r % k;
    s.labels[r] = static_cast<int>(cls);
    for (std::size_t c = 0; c < d; ++c) s.inputs.at(r, c) = means[cls][c] + spec.cluster_spread * noise(rng);
  }
  return s;
}

Samples sample_regression(const TaskStreamSpec& spec, const Tensor& a, std::size_t n, Rng& rng) {
  const std::size_t d = spec.input_dim, k = spec.output_dim;
  std::normal_distribution<double> unit(0.0, 1.0);
  Samples s;
  s.inputs = Tensor(Shape{n, d});
  s.targets = Tensor(Shape{n, k});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) s.inputs.at(r, c) = unit(rng);
    for (std::size_t o = 0; o < k; ++o) {
      double y = 0.0;
      for (std::size_t c = 0; c < d; ++c) y += a.at(o, c) * s.inputs.at(r, c);
      s.targets.at(r, o) = y + spec.noise_std * unit(rng);
    }
  }
  return s;
}

}  // namespace

Tensor class_mean(const TaskStreamSpec& spec, std::size_t task_index, std::size_t cls) {
  Rng rng = keyed_rng(spec.seed, 1, static_cast<std::uint32_t>(task_index), static_cast<std::uint32_t>(cls));
  std::normal_distribution<double> draw(0.0, spec.mean_scale);
  Tensor mean(Shape{spec.input_dim});
  for (double& v : mean.data()) v = draw(rng);
  return mean;
}

TaskStream gen_stream(const TaskStreamSpec& spec) {
  validate(spec);
  TaskStream stream;
  stream.reserve(spec.t);
  for (std::size_t i = 1; i <= spec.t; ++i) {
    Task task;
    task.index = static_cast<int>(i);
    Rng train_rng = keyed_rng(spec.seed, 2, static_cast<std::uint32_t>(i), 0);
    Rng test_rng = keyed_rng(spec.seed, 2, static_cast<std::uint32_t>(i), 1);
    if (is_classification_task(spec, i)) {
      task.loss = LossKind::cross_entropy;
      task.output_dim = spec.classes_per_task;
      std::vector<Tensor> means;
      for (std::size_t c = 0; c < spec.classes_per_task; ++c) means.push_back(class_mean(spec, i, c));
      task.train = sample_classification(spec, means, spec.train_per_task, train_rng);
      task.test = sample_classification(spec, means, spec.test_per_task, test_rng);
    } else {
      task.loss = spec.regression_loss;
      task.output_dim = spec.output_dim;
      Rng a_rng = keyed_rng(spec.seed, 3, static_cast<std::uint32_t>(i), 0);
      std::normal_distribution<double> draw(0.0, 1.0 / std::sqrt(static_cast<double>(spec.input_dim)));
      Tensor a(Shape{spec.output_dim, spec.input_dim});
      for (double& v : a.data()) v = draw(a_rng);
      task.train = sample_regression(spec, a, spec.train_per_task, train_rng);
      task.test = sample_regression(spec, a, spec.test_per_task, test_rng);
    }
    stream.push_back(std::move(task));
  }
  return stream;
}

namespace {

json matrix_json(const Tensor& t) {
  json rows = json::array();
  if (t.rank() != 2) return rows;
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    const auto row = t.data().subspan(r * t.dim(1), t.dim(1));
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Tensor matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty()) throw ValueError("expected a non-empty matrix");
  const std::size_t n = rows.size(), d = rows.front().size();
  Tensor t(Shape{n, d});
  for (std::size_t r = 0; r < n; ++r) {
    if (rows[r].size() != d) throw ValueError("ragged matrix");
    for (std::size_t c = 0; c < d; ++c) t.at(r, c) = rows[r][c].get<double>();
  }
  return t;
}

json samples_json(const Samples& s) {
  json j{{"inputs", matrix_json(s.inputs)}};
  if (!s.labels.empty()) j["labels"] = s.labels;
  if (s.targets.rank() == 2) j["targets"] = matrix_json(s.targets);
  return j;
}

Samples samples_from_json(const json& j) {
  Samples s;
  s.inputs = matrix_from_json(j.at("inputs"));
  if (j.contains("labels")) s.labels = j.at("labels").get<std::vector<int>>();
  if (j.contains("targets")) s.targets = matrix_from_json(j.at("targets"));
  return s;
}

}  // namespace

std::string stream_spec_to_json(const TaskStreamSpec& s) {
  json j{{"kind", to_string(s.kind)},
         {"t", s.t},
         {"classes_per_task", s.classes_per_task},
         {"output_dim", s.output_dim},
         {"input_dim", s.input_dim},
         {"train_per_task", s.train_per_task},
         {"test_per_task", s.test_per_task},
         {"seed", s.seed},
         {"cluster_spread", s.cluster_spread},
         {"mean_scale", s.mean_scale},
         {"noise_std", s.noise_std},
         {"regression_loss", to_string(s.regression_loss)}};
  return j.dump(2);
}

TaskStreamSpec stream_spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("stream spec: ") + e.what());
  }
  TaskStreamSpec s;
  try {
    if (j.contains("kind")) s.kind = parse_stream_kind(j.at("kind").get<std::string>());
    if (j.contains("t")) s.t = j.at("t").get<std::size_t>();
    if (j.contains("classes_per_task")) s.classes_per_task = j.at("classes_per_task").get<std::size_t>();
    if (j.contains("output_dim")) s.output_dim = j.at("output_dim").get<std::size_t>();
    if (j.contains("input_dim")) s.input_dim = j.at("input_dim").get<std::size_t>();
    if (j.contains("train_per_task")) s.train_per_task = j.at("train_per_task").get<std::size_t>();
    if (j.contains("test_per_task")) s.test_per_task = j.at("test_per_task").get<std::size_t>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cluster_spread")) s.cluster_spread = j.at("cluster_spread").get<double>();
    if (j.contains("mean_scale")) s.mean_scale = j.at("mean_scale").get<double>();
    if (j.contains("noise_std")) s.noise_std = j.at("noise_std").get<double>();
    if (j.contains("regression_loss")) s.regression_loss = parse_loss_kind(j.at("regression_loss").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("stream spec: ") + e.what());
  }
  validate(s);
  return s;
}

std::string stream_to_json(const TaskStream& stream) {
  json tasks = json::array();
  for (const Task& t : stream) {
    tasks.push_back({{"index", t.index},
                     {"loss", to_string(t.loss)},
                     {"output_dim", t.output_dim},
                     {"train", samples_json(t.train)},
                     {"test", samples_json(t.test)}});
  }
  return json{{"tasks", tasks}}.dump();
}

TaskStream stream_from_json(std::string_view text) {
  TaskStream stream;
  try {
    const json j = json::parse(text);
    for (const json& t : j.at("tasks")) {
      Task task;
      task.index = t.at("index").get<int>();
      task.loss = parse_loss_kind(t.at("loss").get<std::string>());
      task.output_dim = t.at("output_dim").get<std::size_t>();
      task.train = samples_from_json(t.at("train"));
      task.test = samples_from_json(t.at("test"));
      stream.push_back(std::move(task));
    }
  } catch (const json::exception& e) {
    throw ValueError(std::string("stream: ") + e.what());
  }
  return stream;
}

}  // namespace carl
