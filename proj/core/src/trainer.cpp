#include "carl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "carl/autodiff.hpp"
#include "carl/errors.hpp"
#include "carl/losses.hpp"

namespace carl {

namespace {

enum Purpose : std::uint64_t { init_stream = 1, data_stream = 2, replay_stream = 3, buffer_stream = 4, mix_stream = 5 };

}  // namespace

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::sgd_only: return "sgd";
    case MethodKind::er: return "er";
    case MethodKind::car: return "car";
  }
  return "?";
}

std::string_view to_string(ReplaySchedule schedule) {
  return schedule == ReplaySchedule::joint ? "joint" : "probabilistic";
}

MethodKind parse_method_kind(std::string_view name) {
  if (name == "sgd" || name == "sgd_only") return MethodKind::sgd_only;
  if (name == "er") return MethodKind::er;
  if (name == "car") return MethodKind::car;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

ReplaySchedule parse_replay_schedule(std::string_view name) {
  if (name == "joint") return ReplaySchedule::joint;
  if (name == "probabilistic") return ReplaySchedule::probabilistic;
  throw ConfigError("unknown replay schedule '" + std::string(name) + "'");
}

Rng derive_rng(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

void validate(const TrainConfig& c, const TaskStream& stream) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (stream.empty()) fail("task stream is empty");
  validate(c.optimizer);
  if (c.epochs == 0) fail("epochs must be at least 1");
  if (c.batch_size == 0) fail("batch_size must be at least 1");
  if (c.replay_batch_size == 0) fail("replay_batch_size must be at least 1");
  if (c.memory_per_task == 0) fail("memory_per_task must be at least 1");
  if (c.histogram_bins == 0) fail("histogram_bins must be at least 1");
  const Method& m = c.method;
  if (!std::isfinite(m.lambda) || m.lambda < 0.0) fail("lambda must be finite and nonnegative");
  if (!std::isfinite(m.lambda_fm) || m.lambda_fm < 0.0) fail("lambda_fm must be finite and nonnegative");
  if (!(m.p_replay >= 0.0 && m.p_replay <= 1.0)) fail("p_replay must lie in [0, 1]");
  if (m.schedule == ReplaySchedule::probabilistic && m.p_replay >= 1.0 && m.replays()) {
    fail("p_replay = 1 never consumes a current batch");
  }
  if (c.strategy == FillStrategy::high_variance && c.epochs < 2) {
    fail("high_variance filling needs at least 2 epochs of loss observations");
  }
  if (c.fm_loss == FmLossKind::mmd && c.replay_batch_size < 2) fail("mmd feature matching needs replay_batch_size >= 2");
  if (c.encoder.input_dim == 0 || shape_size(c.encoder.feature_shape) == 0) fail("encoder dimensions must be positive");
  if (c.encoder.feature_shape.size() != 1 && c.encoder.feature_shape.size() != 3) {
    fail("feature_shape must have 1 or 3 axes");
  }
  if (c.compression != CompressionKind::none) {
    if (c.encoder.feature_shape.size() != 3) fail(std::string(to_string(c.compression)) + " pooling needs a 3-axis feature shape");
    if (c.feature_source == FeatureSource::all_layers) fail("all_layers features support only compression none");
  }
  for (std::size_t k = 0; k < stream.size(); ++k) {
    const Task& t = stream[k];
    const std::string name = "task " + std::to_string(k + 1);
    if (t.index != static_cast<int>(k) + 1) fail(name + " has index " + std::to_string(t.index));
    if (t.train.empty()) fail(name + " has no training samples");
    if (t.test.empty()) fail(name + " has no test samples");
    if (t.train.inputs.dim(1) != c.encoder.input_dim || t.test.inputs.dim(1) != c.encoder.input_dim) {
      fail(name + " input width does not match encoder input_dim");
    }
    if (t.output_dim == 0) fail(name + " has output_dim 0");
  }
}

TaskHead& Model::head(int task_index) {
  if (task_index < 1 || static_cast<std::size_t>(task_index) > heads.size()) {
    throw ValueError("no head for task " + std::to_string(task_index));
  }
  return heads[static_cast<std::size_t>(task_index) - 1];
}

std::vector<Parameter*> Model::trainable(int task_index) {
  auto params = encoder.parameters();
  for (Parameter* p : head(task_index).parameters()) params.push_back(p);
  return params;
}

Model make_model(const TaskStream& stream, const EncoderSpec& spec, Rng& rng) {
  Model model{Encoder::mlp(spec, rng), {}};
  model.heads.reserve(stream.size());
  for (const Task& t : stream) model.heads.push_back(TaskHead::make(model.encoder.feature_dim(), t.output_dim, t.index, rng));
  return model;
}

EpochBatcher::EpochBatcher(std::size_t n, std::size_t batch_size) : n_(n), batch_(batch_size), pos_(n), order_(n) {
  if (n == 0 || batch_size == 0) throw ValueError("EpochBatcher needs n > 0 and batch_size > 0");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> EpochBatcher::next(Rng& rng) {
  if (pos_ >= n_) {
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }
  const std::size_t end = std::min(n_, pos_ + batch_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return out;
}

Evaluation evaluate(Encoder& encoder, TaskHead& head, const Samples& split, LossKind kind) {
  if (split.empty()) throw ValueError("cannot evaluate on an empty split");
  Tape tape;
  Var feats = forward_encoder(tape, encoder, tape.constant(split.inputs), Binding::frozen);
  Var pred = forward_head(tape, head, feats, Binding::frozen);
  Evaluation ev;
  ev.loss = batch_loss(pred, split, kind).value().item();
  if (is_classification(kind)) {
    const Tensor& p = pred.value();
    const std::size_t n = p.dim(0), k = p.dim(1);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (p.at(r, c) > p.at(r, best)) best = c;
      if (static_cast<int>(best) == split.labels[r]) ++correct;
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  return ev;
}

ContinualTrainer::ContinualTrainer(const TaskStream& stream, TrainConfig config)
    : stream_(stream),
      config_(std::move(config)),
      init_rng_(derive_rng(config_.seed, init_stream)),
      data_rng_(derive_rng(config_.seed, data_stream)),
      replay_rng_(derive_rng(config_.seed, replay_stream)),
      model_(make_model(stream, (validate(config_, stream), config_.encoder), init_rng_)),
      buffer_(config_.memory_per_task, config_.seed ^ 0x9e3779b97f4a7c15ULL),
      optimizer_(config_.optimizer),
      strategy_(config_.strategy, config_.histogram_bins) {
  buffer_.rng() = derive_rng(config_.seed, buffer_stream);
}

const Task& ContinualTrainer::task(int task_index) const {
  if (task_index < 1 || static_cast<std::size_t>(task_index) > stream_.size()) {
    throw ValueError("task index " + std::to_string(task_index) + " outside the stream");
  }
  return stream_[static_cast<std::size_t>(task_index) - 1];
}

std::vector<ReplayDraw> ContinualTrainer::draw_joint_replay(int task_index) {
  std::vector<ReplayDraw> draws;
  const bool weighted = config_.strategy == FillStrategy::loss_eq_weighted;
  if (!config_.method.replays() || task_index <= 1) return draws;
  if (config_.method.sample_one_past_task) {
    std::uniform_int_distribution<int> pick(1, task_index - 1);
    const int j = pick(replay_rng_);
    draws.push_back({j, sample_replay_batch(buffer_, j, config_.replay_batch_size, replay_rng_, weighted)});
    return draws;
  }
  for (int j = 1; j < task_index; ++j) {
    draws.push_back({j, sample_replay_batch(buffer_, j, config_.replay_batch_size, replay_rng_, weighted)});
  }
  return draws;
}

namespace {

/// |adjoint| of each feature-layer output, compressed per row and concatenated.
Tensor compressed_abs_adjoint(const Tape& tape, std::span<const Var> layers, CompressionKind kind) {
  Tape scratch;
  std::vector<Var> parts;
  parts.reserve(layers.size());
  for (const Var& v : layers) {
    Tensor g = tape.adjoint(v);
    for (double& x : g.data()) x = std::abs(x);
    parts.push_back(compress(scratch.constant(std::move(g)), kind));
  }
  if (parts.size() == 1) return parts.front().value();
  return concat_cols(parts).value();
}

}  // namespace

StepInfo ContinualTrainer::apply_step(const Task& current, const Samples* batch, std::span<const ReplayDraw> replay,
                                      bool want_feature_grad) {
  if (batch == nullptr && replay.empty()) throw ValueError("step has neither a current batch nor replay samples");
  const Method& method = config_.method;
  const double lambda = method.effective_lambda();
  const double lambda_fm = method.effective_lambda_fm();

  Tape tape;
  Var total;
  std::vector<Var> current_layers;
  StepInfo info;

  if (batch != nullptr) {
    current_layers = forward_encoder_layers(tape, model_.encoder, tape.constant(batch->inputs));
    Var pred = forward_head(tape, model_.head(current.index), current_layers.back());
    total = batch_loss(pred, *batch, current.loss);
    info.current_predictions = pred.value();
  }

  if (!replay.empty()) {
    Var replay_sum;
    for (const ReplayDraw& draw : replay) {
      if (draw.task_index >= current.index) {
        throw ValueError("replay draw for task " + std::to_string(draw.task_index) + " while training task " +
                         std::to_string(current.index));
      }
      const Samples s = to_samples(draw.items);
      const auto layers = forward_encoder_layers(tape, model_.encoder, tape.constant(s.inputs));
      Var term;
      if (lambda > 0.0) {
        Var pred = forward_head(tape, model_.head(draw.task_index), layers.back(), Binding::frozen);
        term = scale(batch_loss(pred, s, task(draw.task_index).loss), lambda);
      }
      if (lambda_fm > 0.0) {
        Var cf = config_.feature_source == FeatureSource::final_layer ? compress(layers.back(), config_.compression)
                                                                      : compress_multilayer(layers, config_.compression);
        Var stored = tape.constant(stored_features(draw.items));
        const Tensor* w = is_weighted(config_.fm_loss) ? buffer_.feature_weights(draw.task_index) : nullptr;
        if (is_weighted(config_.fm_loss) && w == nullptr) {
          throw StateError("no feature weights stored for task " + std::to_string(draw.task_index));
        }
        Var fm = scale(fm_loss(cf, stored, config_.fm_loss, w, config_.fm_reduction), lambda_fm);
        term = term.valid() ? add(term, fm) : fm;
      }
      if (!term.valid()) continue;
      replay_sum = replay_sum.valid() ? add(replay_sum, term) : term;
    }
    if (replay_sum.valid()) {
      Var avg = scale(replay_sum, 1.0 / static_cast<double>(replay.size()));
      total = total.valid() ? add(total, avg) : avg;
    }
  }
  if (!total.valid()) throw ValueError("step has an empty objective");

  const Gradients grads = tape.backward(total);
  info.loss = total.value().item();
  if (want_feature_grad && batch != nullptr) {
    if (config_.feature_source == FeatureSource::final_layer) {
      const Var last[] = {current_layers.back()};
      info.feature_grad = compressed_abs_adjoint(tape, last, config_.compression);
    } else {
      info.feature_grad = compressed_abs_adjoint(tape, current_layers, config_.compression);
    }
  }

  const auto params = batch != nullptr ? model_.trainable(current.index) : model_.encoder.parameters();
  optimizer_.step(params, grads);
  ++steps_;
  return info;
}

void ContinualTrainer::train_task(int task_index) {
  if (task_index != finished_ + 1 || trained_ != finished_) {
    throw StateError("tasks must be trained in order; next is " + std::to_string(finished_ + 1));
  }
  const Task& t = task(task_index);
  const std::size_t n = t.train.size();
  strategy_.begin_task(task_index, n);

  const bool weighted_fm = config_.method.kind == MethodKind::car && is_weighted(config_.fm_loss);
  weight_acc_.reset();
  if (weighted_fm) {
    weight_acc_.emplace(compressed_dim(model_.encoder, config_.compression, config_.feature_source));
  }
  const bool track_losses = needs_losses(config_.strategy);
  const bool replaying = config_.method.replays() && task_index > 1;
  const bool probabilistic = config_.method.schedule == ReplaySchedule::probabilistic;
  const bool weighted_sampling = config_.strategy == FillStrategy::loss_eq_weighted;

  EpochBatcher batcher(n, config_.batch_size);
  std::bernoulli_distribution coin(config_.method.p_replay);
  std::uniform_int_distribution<int> past(1, std::max(1, task_index - 1));

  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    const bool final_epoch = epoch + 1 == config_.epochs;
    for (std::size_t b = 0; b < batcher.batches_per_epoch();) {
      if (replaying && probabilistic && coin(replay_rng_)) {
        const int j = past(replay_rng_);
        const ReplayDraw draw{j, sample_replay_batch(buffer_, j, config_.replay_batch_size, replay_rng_, weighted_sampling)};
        apply_step(t, nullptr, std::span<const ReplayDraw>(&draw, 1));
        continue;
      }
      const auto idx = batcher.next(data_rng_);
      const Samples batch = t.train.select(idx);
      const auto draws = replaying && !probabilistic ? draw_joint_replay(task_index) : std::vector<ReplayDraw>{};
      const StepInfo info = apply_step(t, &batch, draws, weighted_fm);

      if (track_losses) {
        const auto losses = per_sample_losses(info.current_predictions, batch, t.loss);
        for (std::size_t r = 0; r < idx.size(); ++r) strategy_.record_loss(idx[r], losses[r], final_epoch);
      }
      if (config_.strategy == FillStrategy::reservoir && epoch == 0) {
        for (std::size_t sample : idx) buffer_.reservoir_insert(strategy_, task_index, make_item(t.train, sample, task_index));
      }
      if (weighted_fm) {
        const std::size_t d = info.feature_grad.dim(1);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          weight_acc_->accumulate(info.feature_grad.data().subspan(r * d, d));
        }
      }
      ++b;
    }
  }
  trained_ = task_index;
}

void ContinualTrainer::finish_task(int task_index) {
  if (task_index != trained_ || finished_ == trained_) throw StateError("finish_task must follow train_task");
  const Task& t = task(task_index);
  if (config_.strategy != FillStrategy::reservoir) {
    const Selection sel = select_for_buffer(strategy_, t.train.size(), config_.memory_per_task, buffer_.rng());
    buffer_.store(task_index, t.train, sel);
  }
  if (weight_acc_) {
    buffer_.set_feature_weights(task_index, weight_acc_->finalize());
    weight_acc_.reset();
  }
  if (config_.method.kind == MethodKind::car || config_.track_drift) {
    attach_features(buffer_, task_index, model_.encoder, config_.compression, config_.feature_source);
  }
  finished_ = task_index;
}

MetricSummary summarize(const EvalMatrix& losses, const std::optional<EvalMatrix>& accuracy,
                        const std::optional<MultitaskReference>& multitask) {
  MetricSummary s;
  if (accuracy) {
    s.forgetting = forgetting_accuracy(*accuracy);
    s.avg_accuracy = avg_accuracy(*accuracy);
  } else {
    s.forgetting = forgetting_loss(losses);
  }
  if (multitask) s.perf_drop = performance_drop(losses, *multitask);
  return s;
}

RunResult train_sequence(const TaskStream& stream, const TrainConfig& config, bool with_multitask) {
  const auto start = std::chrono::steady_clock::now();
  ContinualTrainer trainer(stream, config);
  const std::size_t t = stream.size();
  const bool classification =
      std::all_of(stream.begin(), stream.end(), [](const Task& task) { return is_classification(task.loss); });

  RunResult result;
  result.seed = config.seed;
  result.loss_matrix = EvalMatrix(t, EvalKind::loss);
  if (classification) result.accuracy_matrix.emplace(t, EvalKind::accuracy);

  const bool drift = config.method.kind == MethodKind::car || config.track_drift;
  for (int i = 1; i <= static_cast<int>(t); ++i) {
    trainer.train_task(i);
    if (drift) {
      result.drift_trace.push_back(i > 1 ? feature_drift(trainer.buffer(), trainer.model().encoder, config.compression,
                                                         config.feature_source)
                                         : std::map<int, double>{});
    }
    trainer.finish_task(i);
    for (int j = 1; j <= i; ++j) {
      const Task& task = stream[static_cast<std::size_t>(j) - 1];
      const Evaluation ev = evaluate(trainer.model().encoder, trainer.model().head(j), task.test, task.loss);
      result.loss_matrix.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), ev.loss);
      if (result.accuracy_matrix) {
        result.accuracy_matrix->set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), *ev.accuracy);
      }
    }
  }
  if (with_multitask) result.multitask = train_multitask(stream, config);
  result.summary = summarize(result.loss_matrix, result.accuracy_matrix, result.multitask);
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

MultitaskReference train_multitask(const TaskStream& stream, const TrainConfig& config) {
  validate(config, stream);
  Rng init_rng = derive_rng(config.seed, init_stream);
  Rng data_rng = derive_rng(config.seed, data_stream);
  Rng mix_rng = derive_rng(config.seed, mix_stream);
  Model model = make_model(stream, config.encoder, init_rng);
  Optimizer optimizer(config.optimizer);

  std::vector<EpochBatcher> batchers;
  std::size_t budget = 0;
  for (const Task& t : stream) {
    batchers.emplace_back(t.train.size(), config.batch_size);
    budget += config.epochs * batchers.back().batches_per_epoch();
  }
  if (config.multitask_iterations > 0) budget = config.multitask_iterations;

  std::uniform_int_distribution<std::size_t> pick(0, stream.size() - 1);
  for (std::size_t step = 0; step < budget; ++step) {
    const std::size_t k = stream.size() == 1 ? 0 : pick(mix_rng);
    const Task& t = stream[k];
    const Samples batch = t.train.select(batchers[k].next(data_rng));
    Tape tape;
    Var loss = task_loss(tape, model.encoder, model.head(t.index), batch, t.loss);
    const Gradients grads = tape.backward(loss);
    optimizer.step(model.trainable(t.index), grads);
  }

  MultitaskReference ref;
  for (const Task& t : stream) ref.mt_losses.push_back(evaluate(model.encoder, model.head(t.index), t.test, t.loss).loss);
  return ref;
}

}  // namespace carl
