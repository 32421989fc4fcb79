#include "carl/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "carl/errors.hpp"
#include "json.hpp"

namespace carl {

std::string_view to_string(EvalKind kind) { return kind == EvalKind::loss ? "loss" : "accuracy"; }

EvalKind parse_eval_kind(std::string_view name) {
  if (name == "loss") return EvalKind::loss;
  if (name == "accuracy") return EvalKind::accuracy;
  throw ValueError("unknown eval matrix kind '" + std::string(name) + "'");
}

EvalMatrix::EvalMatrix(std::size_t t, EvalKind kind) : t_(t), kind_(kind), values_(t * t) {
  if (t == 0) throw ValueError("eval matrix needs at least one task");
}

std::size_t EvalMatrix::index(std::size_t i, std::size_t j) const {
  if (i < 1 || i > t_ || j < 1 || j > t_) {
    throw DimensionError("eval matrix index (" + std::to_string(i) + ", " + std::to_string(j) + ") outside 1.." +
                         std::to_string(t_));
  }
  return (i - 1) * t_ + (j - 1);
}

void EvalMatrix::set(std::size_t i, std::size_t j, double value) {
  const std::size_t k = index(i, j);
  if (j > i) {
    throw ValueError("task " + std::to_string(j) + " cannot be evaluated at checkpoint " + std::to_string(i));
  }
  if (!std::isfinite(value)) throw NumericError("eval matrix entries must be finite");
  if (kind_ == EvalKind::accuracy && (value < 0.0 || value > 1.0)) throw ValueError("accuracy outside [0, 1]");
  if (kind_ == EvalKind::loss && value < 0.0) throw ValueError("negative test loss");
  if (values_[k]) {
    throw StateError("eval matrix entry (" + std::to_string(i) + ", " + std::to_string(j) + ") written twice");
  }
  values_[k] = value;
}

bool EvalMatrix::has(std::size_t i, std::size_t j) const { return values_[index(i, j)].has_value(); }

std::optional<double> EvalMatrix::get(std::size_t i, std::size_t j) const { return values_[index(i, j)]; }

double EvalMatrix::at(std::size_t i, std::size_t j) const {
  const auto v = get(i, j);
  if (!v) {
    throw ValueError("eval matrix entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is missing");
  }
  return *v;
}

std::string EvalMatrix::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 1; i <= t_; ++i)
    for (std::size_t j = 1; j <= t_; ++j)
      if (auto v = get(i, j)) entries.push_back(nlohmann::json::array({i, j, *v}));
  nlohmann::json doc;
  doc["kind"] = std::string(to_string(kind_));
  doc["t"] = t_;
  doc["entries"] = std::move(entries);
  return doc.dump();
}

EvalMatrix EvalMatrix::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    EvalMatrix m(doc.at("t").get<std::size_t>(), parse_eval_kind(doc.at("kind").get<std::string>()));
    for (const auto& e : doc.at("entries")) {
      m.set(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>());
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ValueError(std::string("malformed eval matrix JSON: ") + ex.what());
  }
}

namespace {
void require_kind(const EvalMatrix& m, EvalKind kind, const char* op) {
  if (m.kind() != kind) {
    throw ValueError(std::string(op) + " needs a " + std::string(to_string(kind)) + " matrix");
  }
}
}  // namespace

double forgetting_loss(const EvalMatrix& losses) {
  require_kind(losses, EvalKind::loss, "forgetting_loss");
  const std::size_t t = losses.tasks();
  double total = 0.0;
  for (std::size_t i = 1; i <= t; ++i) {
    const double own = losses.at(i, i);
    if (own == 0.0) throw NumericError("forgetting_loss: zero test loss at (" + std::to_string(i) + ", " +
                                       std::to_string(i) + ")");
    total += (losses.at(t, i) - own) / own;
  }
  return total / static_cast<double>(t) * 100.0;
}

double performance_drop(const EvalMatrix& losses, const MultitaskReference& ref) {
  require_kind(losses, EvalKind::loss, "performance_drop");
  const std::size_t t = losses.tasks();
  if (ref.mt_losses.size() != t) {
    throw DimensionError("performance_drop: " + std::to_string(ref.mt_losses.size()) + " reference losses for " +
                         std::to_string(t) + " tasks");
  }
  double total = 0.0;
  for (std::size_t i = 1; i <= t; ++i) {
    const double mt = ref.mt_losses[i - 1];
    if (mt == 0.0) throw NumericError("performance_drop: zero multitask reference loss for task " + std::to_string(i));
    total += (losses.at(t, i) - mt) / mt;
  }
  return total / static_cast<double>(t) * 100.0;
}

double forgetting_accuracy(const EvalMatrix& accuracy) {
  require_kind(accuracy, EvalKind::accuracy, "forgetting_accuracy");
  const std::size_t t = accuracy.tasks();
  double total = 0.0;
  for (std::size_t i = 1; i <= t; ++i) {
    const double final_acc = accuracy.at(t, i);
    double best = 0.0;  // j = t contributes exactly 0
    for (std::size_t j = i; j < t; ++j) best = std::max(best, accuracy.at(j, i) - final_acc);
    total += best;
  }
  return total / static_cast<double>(t);
}

double avg_accuracy(const EvalMatrix& accuracy) {
  require_kind(accuracy, EvalKind::accuracy, "avg_accuracy");
  const std::size_t t = accuracy.tasks();
  double total = 0.0;
  for (std::size_t i = 1; i <= t; ++i) total += accuracy.at(t, i);
  return total / static_cast<double>(t);
}

std::map<int, double> feature_drift(const ReplayBuffer& buffer, Encoder& encoder, CompressionKind compression,
                                  FeatureSource source) {
  if (buffer.total_size() == 0) throw EmptyBufferError("feature_drift over an empty replay buffer");
  std::map<int, double> out;
  for (int task : buffer.tasks()) {
    if (!buffer.features_attached(task)) continue;
    const auto items = buffer.items(task);
    const Samples batch = to_samples(items);
    const Tensor stored = stored_features(items);
    Tape tape;
    const Var now = compressed_features(tape, encoder, tape.constant(batch.inputs), compression, source,
                                        Binding::frozen);
    if (now.value().shape() != stored.shape()) {
      throw DimensionError("stored features " + shape_string(stored.shape()) + " vs recomputed " +
                           shape_string(now.value().shape()));
    }
    const std::size_t n = stored.dim(0), d = stored.dim(1);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = stored[r * d + c] - now.value()[r * d + c];
        s += diff * diff;
      }
      total += std::sqrt(s);
    }
    out[task] = total / static_cast<double>(n);
  }
  return out;
}

}  // namespace carl
