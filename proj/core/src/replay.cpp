#include "carl/replay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "carl/errors.hpp"
#include "json.hpp"

namespace carl {

std::string_view to_string(FillStrategy strategy) {
  switch (strategy) {
    case FillStrategy::uniform: return "uniform";
    case FillStrategy::reservoir: return "reservoir";
    case FillStrategy::hard: return "hard";
    case FillStrategy::easy: return "easy";
    case FillStrategy::high_variance: return "high_variance";
    case FillStrategy::loss_eq: return "loss_eq";
    case FillStrategy::loss_eq_weighted: return "loss_eq_weighted";
  }
  return "?";
}

FillStrategy parse_fill_strategy(std::string_view name) {
  if (name == "uniform") return FillStrategy::uniform;
  if (name == "reservoir") return FillStrategy::reservoir;
  if (name == "hard") return FillStrategy::hard;
  if (name == "easy") return FillStrategy::easy;
  if (name == "high_variance") return FillStrategy::high_variance;
  if (name == "loss_eq") return FillStrategy::loss_eq;
  if (name == "loss_eq_weighted") return FillStrategy::loss_eq_weighted;
  throw ConfigError("unknown buffer filling strategy '" + std::string(name) + "'");
}

bool needs_losses(FillStrategy strategy) {
  return strategy == FillStrategy::hard || strategy == FillStrategy::easy || strategy == FillStrategy::high_variance ||
         strategy == FillStrategy::loss_eq || strategy == FillStrategy::loss_eq_weighted;
}

// ---------------------------------------------------------------------------

void WelfordStats::push(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

LossHistogram LossHistogram::build(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ValueError("histogram needs at least one bin");
  if (values.empty()) throw ValueError("histogram over no values");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw NumericError("histogram over non-finite values");
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0 / static_cast<double>(bins);
  LossHistogram h;
  h.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) h.edges[k] = lo + width * static_cast<double>(k);
  if (hi > lo) h.edges.back() = hi;
  h.counts = h.count(values);
  return h;
}

std::size_t LossHistogram::bin_of(double value) const {
  const std::size_t bins = edges.size() - 1;
  const double lo = edges.front();
  const double hi = edges.back();
  if (value <= lo) return 0;
  if (value >= hi) return bins - 1;
  const auto k = static_cast<std::size_t>(std::floor((value - lo) / (hi - lo) * static_cast<double>(bins)));
  return std::min(k, bins - 1);
}

std::size_t LossHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::vector<std::size_t> LossHistogram::count(std::span<const double> values) const {
  std::vector<std::size_t> out(edges.size() - 1, 0);
  for (double v : values) ++out[bin_of(v)];
  return out;
}

// ---------------------------------------------------------------------------

StrategyState::StrategyState(FillStrategy strategy, std::size_t histogram_bins)
    : strategy_(strategy), bins_(histogram_bins) {
  if (bins_ == 0) throw ConfigError("histogram bin count must be positive");
}

void StrategyState::begin_task(int task_index, std::size_t n) {
  task_ = task_index;
  seen_[task_index] = 0;
  welford_.assign(n, WelfordStats{});
  final_losses_.assign(n, std::numeric_limits<double>::quiet_NaN());
}

void StrategyState::record_loss(std::size_t sample, double loss, bool final_epoch) {
  if (sample >= welford_.size()) throw DimensionError("record_loss: sample index out of range");
  welford_[sample].push(loss);
  if (final_epoch) final_losses_[sample] = loss;
}

std::size_t StrategyState::seen(int task_index) const {
  auto it = seen_.find(task_index);
  return it == seen_.end() ? 0 : it->second;
}

LossHistogram StrategyState::loss_histogram() const {
  std::vector<double> observed;
  for (double v : final_losses_) {
    if (!std::isnan(v)) observed.push_back(v);
  }
  return LossHistogram::build(observed, bins_);
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t m, std::uint64_t seed) : m_(m), rng_(seed) {
  if (m == 0) throw ConfigError("replay buffer needs m > 0 items per task");
}

std::vector<int> ReplayBuffer::tasks() const {
  std::vector<int> out;
  for (const auto& [task, items] : per_task_) {
    if (!items.empty()) out.push_back(task);
  }
  return out;
}

bool ReplayBuffer::has_task(int task_index) const {
  auto it = per_task_.find(task_index);
  return it != per_task_.end() && !it->second.empty();
}

std::span<const ReplayItem> ReplayBuffer::items(int task_index) const {
  auto it = per_task_.find(task_index);
  if (it == per_task_.end()) return {};
  return it->second;
}

std::vector<ReplayItem>& ReplayBuffer::mutable_items(int task_index) { return per_task_[task_index]; }

std::size_t ReplayBuffer::total_size() const {
  std::size_t n = 0;
  for (const auto& [task, items] : per_task_) n += items.size();
  return n;
}

void ReplayBuffer::store(int task_index, const Samples& data, const Selection& selection) {
  if (selection.indices.size() > m_) {
    throw ValueError("selection of " + std::to_string(selection.indices.size()) + " items exceeds capacity " +
                     std::to_string(m_));
  }
  if (!selection.weights.empty() && selection.weights.size() != selection.indices.size()) {
    throw DimensionError("selection weights do not match its indices");
  }
  std::vector<ReplayItem> items;
  items.reserve(selection.indices.size());
  for (std::size_t k = 0; k < selection.indices.size(); ++k) {
    ReplayItem item = make_item(data, selection.indices[k], task_index);
    if (!selection.weights.empty()) {
      const double w = selection.weights[k];
      if (!(w > 0.0) || !std::isfinite(w)) throw ValueError("replay item weights must be finite and positive");
      item.weight = w;
    }
    items.push_back(std::move(item));
  }
  per_task_[task_index] = std::move(items);
  featured_.erase(task_index);
}

void ReplayBuffer::reservoir_insert(StrategyState& state, int task_index, ReplayItem item) {
  auto& slots = per_task_[task_index];
  const std::size_t k = ++state.seen_count(task_index);
  if (slots.size() < m_) {
    slots.push_back(std::move(item));
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  const std::size_t j = pick(rng_);
  if (j < m_) slots[j] = std::move(item);
}

bool ReplayBuffer::features_attached(int task_index) const {
  auto it = featured_.find(task_index);
  return it != featured_.end() && it->second;
}

void ReplayBuffer::mark_features_attached(int task_index) { featured_[task_index] = true; }

void ReplayBuffer::set_feature_weights(int task_index, std::vector<double> weights) {
  fm_weights_[task_index] = Tensor::vector(std::move(weights));
}

const Tensor* ReplayBuffer::feature_weights(int task_index) const {
  auto it = fm_weights_.find(task_index);
  return it == fm_weights_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------

Selection fill_uniform(std::size_t n, std::size_t m, Rng& rng) {
  if (m == 0) throw ValueError("fill_uniform needs m > 0");
  if (n == 0) throw ValueError("fill_uniform over an empty task");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(m, n);
  // Partial Fisher-Yates: the first `take` slots end up a uniform sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  return Selection{std::move(idx), {}};
}

namespace {

Selection ranked(std::span<const double> keys, std::size_t m, bool descending) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? keys[a] > keys[b] : keys[a] < keys[b];
  });
  idx.resize(std::min(m, idx.size()));
  return Selection{std::move(idx), {}};
}

void check_losses(std::span<const double> losses) {
  for (double v : losses) {
    if (!std::isfinite(v)) throw ValueError("per-sample losses must be finite (was every sample observed?)");
  }
}

}  // namespace

Selection fill_hard(std::span<const double> losses, std::size_t m) {
  check_losses(losses);
  return ranked(losses, m, true);
}

Selection fill_easy(std::span<const double> losses, std::size_t m) {
  check_losses(losses);
  return ranked(losses, m, false);
}

Selection fill_high_variance(std::span<const WelfordStats> stats, std::size_t m) {
  std::vector<double> var;
  var.reserve(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].count < 2) {
      throw ValueError("sample " + std::to_string(i) + " has " + std::to_string(stats[i].count) +
                       " loss observations; high-variance filling needs at least 2");
    }
    var.push_back(stats[i].variance());
  }
  return ranked(var, m, true);
}

Selection fill_loss_equalized(std::span<const double> losses, std::size_t m, bool weighted, std::size_t bins) {
  check_losses(losses);
  const std::size_t n = losses.size();
  if (m == 0) throw ValueError("fill_loss_equalized needs m > 0");
  if (n == 0) throw ValueError("fill_loss_equalized over an empty task");
  const auto [lo_it, hi_it] = std::minmax_element(losses.begin(), losses.end());
  const double lo = *lo_it, hi = *hi_it;

  Selection sel;
  if (hi == lo) {
    sel.indices.resize(std::min(m, n));
    std::iota(sel.indices.begin(), sel.indices.end(), std::size_t{0});
    if (weighted) sel.weights.assign(sel.indices.size(), 1.0);
    return sel;
  }

  if (m >= n) {
    sel.indices.resize(n);
    std::iota(sel.indices.begin(), sel.indices.end(), std::size_t{0});
  } else {
    // Evenly spaced target losses; each takes the nearest unused sample.
    std::vector<bool> used(n, false);
    for (std::size_t k = 0; k < m; ++k) {
      const double target = m == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(m - 1);
      std::size_t best = n;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (used[i]) continue;
        const double dist = std::abs(losses[i] - target);
        if (dist < best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      used[best] = true;
      sel.indices.push_back(best);
    }
  }

  if (weighted) {
    const LossHistogram hist = LossHistogram::build(losses, bins);
    double total = 0.0;
    for (auto i : sel.indices) {
      sel.weights.push_back(static_cast<double>(hist.counts[hist.bin_of(losses[i])]));
      total += sel.weights.back();
    }
    const double avg = total / static_cast<double>(sel.weights.size());
    for (auto& w : sel.weights) w /= avg;
  }
  return sel;
}

Selection select_for_buffer(const StrategyState& state, std::size_t n, std::size_t m, Rng& rng) {
  switch (state.strategy()) {
    case FillStrategy::uniform: return fill_uniform(n, m, rng);
    case FillStrategy::hard: return fill_hard(state.final_losses(), m);
    case FillStrategy::easy: return fill_easy(state.final_losses(), m);
    case FillStrategy::high_variance: return fill_high_variance(state.variance_stats(), m);
    case FillStrategy::loss_eq: return fill_loss_equalized(state.final_losses(), m, false, state.histogram_bins());
    case FillStrategy::loss_eq_weighted:
      return fill_loss_equalized(state.final_losses(), m, true, state.histogram_bins());
    case FillStrategy::reservoir: break;
  }
  throw StateError("reservoir buffers are filled while streaming, not by selection");
}

std::vector<ReplayItem> sample_replay_batch(const ReplayBuffer& buffer, int task_index, std::size_t batch_size,
                                            Rng& rng, bool weighted) {
  const auto items = buffer.items(task_index);
  if (items.empty()) throw EmptyBufferError("replay buffer holds no items for task " + std::to_string(task_index));
  std::vector<ReplayItem> out;
  out.reserve(batch_size);
  if (weighted) {
    std::vector<double> w;
    w.reserve(items.size());
    for (const auto& it : items) w.push_back(it.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    for (std::size_t k = 0; k < batch_size; ++k) out.push_back(items[pick(rng)]);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
    for (std::size_t k = 0; k < batch_size; ++k) out.push_back(items[pick(rng)]);
  }
  return out;
}

void attach_features(ReplayBuffer& buffer, int task_index, Encoder& encoder, CompressionKind compression,
                     FeatureSource source) {
  if (buffer.features_attached(task_index)) {
    throw StateError("features for task " + std::to_string(task_index) + " are already attached");
  }
  auto& items = buffer.mutable_items(task_index);
  if (!items.empty()) {
    std::vector<Tensor> xs;
    xs.reserve(items.size());
    for (const auto& it : items) xs.push_back(it.x);
    Tape tape;
    Var feats = compressed_features(tape, encoder, tape.constant(Tensor::stack(xs)), compression, source,
                                    Binding::frozen);
    for (std::size_t r = 0; r < items.size(); ++r) items[r].stored_feature = feats.value().row(r);
  }
  buffer.mark_features_attached(task_index);
}

ReplayItem make_item(const Samples& data, std::size_t index, int task_index) {
  if (index >= data.size()) throw DimensionError("sample index " + std::to_string(index) + " out of range");
  ReplayItem item;
  item.x = data.inputs.row(index);
  if (!data.labels.empty()) item.label = data.labels[index];
  if (data.targets.size() > 0) item.y = data.targets.row(index);
  item.task_index = task_index;
  item.source_index = index;
  return item;
}

Samples to_samples(std::span<const ReplayItem> items) {
  Samples out;
  if (items.empty()) return out;
  std::vector<Tensor> xs, ys;
  for (const auto& it : items) {
    xs.push_back(it.x);
    if (it.label >= 0) out.labels.push_back(it.label);
    if (it.y.size() > 0) ys.push_back(it.y);
  }
  out.inputs = Tensor::stack(xs);
  if (!ys.empty()) out.targets = Tensor::stack(ys);
  return out;
}

Tensor stored_features(std::span<const ReplayItem> items) {
  std::vector<Tensor> fs;
  fs.reserve(items.size());
  for (const auto& it : items) {
    if (!it.stored_feature) {
      throw StateError("replay item of task " + std::to_string(it.task_index) + " carries no stored feature");
    }
    fs.push_back(*it.stored_feature);
  }
  return Tensor::stack(fs);
}

std::string buffer_snapshot_json(const ReplayBuffer& buffer) {
  nlohmann::json tasks = nlohmann::json::object();
  for (int task : buffer.tasks()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& it : buffer.items(task)) {
      nlohmann::json j;
      j["x"] = it.x.values();
      if (it.label >= 0) j["label"] = it.label;
      if (it.y.size() > 0) j["y"] = it.y.values();
      if (it.stored_feature) j["feature"] = it.stored_feature->values();
      j["weight"] = it.weight;
      j["source_index"] = it.source_index;
      arr.push_back(std::move(j));
    }
    tasks[std::to_string(task)] = std::move(arr);
  }
  nlohmann::json doc;
  doc["m"] = buffer.capacity_per_task();
  doc["tasks"] = std::move(tasks);
  return doc.dump();
}

}  // namespace carl
