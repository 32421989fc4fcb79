#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "carl/losses.hpp"
#include "carl/metrics.hpp"
#include "carl/nn.hpp"
#include "support.hpp"

namespace carl::testing {

/// Lower-triangular matrix with random losses in [0.05, 4) or accuracies in [0, 1).
inline EvalMatrix random_eval_matrix(std::size_t t, EvalKind kind, Rng& rng) {
  std::uniform_real_distribution<double> u(kind == EvalKind::loss ? 0.05 : 0.0, kind == EvalKind::loss ? 4.0 : 1.0);
  EvalMatrix m(t, kind);
  for (std::size_t i = 1; i <= t; ++i)
    for (std::size_t j = 1; j <= i; ++j) m.set(i, j, u(rng));
  return m;
}

// Full t×t tables with -1 above the diagonal, read back only through plain loops.
inline std::vector<std::vector<double>> table(const EvalMatrix& m) {
  std::vector<std::vector<double>> out(m.tasks() + 1, std::vector<double>(m.tasks() + 1, -1.0));
  for (std::size_t i = 1; i <= m.tasks(); ++i)
    for (std::size_t j = 1; j <= i; ++j) out[i][j] = *m.get(i, j);
  return out;
}

inline double oracle_forgetting_loss(const EvalMatrix& m) {
  const auto l = table(m);
  const std::size_t t = m.tasks();
  double s = 0;
  for (std::size_t i = 1; i <= t; ++i) s += l[t][i] / l[i][i] - 1.0;
  return 100.0 * s / t;
}

inline double oracle_perf_drop(const EvalMatrix& m, const std::vector<double>& mt) {
  const auto l = table(m);
  const std::size_t t = m.tasks();
  double s = 0;
  for (std::size_t i = 1; i <= t; ++i) s += l[t][i] / mt[i - 1] - 1.0;
  return 100.0 * s / t;
}

inline double oracle_forgetting_acc(const EvalMatrix& m) {
  const auto a = table(m);
  const std::size_t t = m.tasks();
  double s = 0;
  for (std::size_t i = 1; i <= t; ++i) {
    double best = -1e300;
    for (std::size_t j = i; j <= t; ++j) best = std::max(best, a[j][i] - a[t][i]);
    s += best;
  }
  return s / t;
}

inline double oracle_avg_acc(const EvalMatrix& m) {
  const auto a = table(m);
  double s = 0;
  for (std::size_t i = 1; i <= m.tasks(); ++i) s += a[m.tasks()][i];
  return s / m.tasks();
}


/// Worst relative error between backward() and central differences over every
/// parameter of a randomly shaped encoder + head with a random loss.
inline double random_model_gradient_error(Rng& rng) {
  std::uniform_int_distribution<std::size_t> width(1, 5), depth(0, 2), rows(1, 4), pick(0, 2);
  const Activation acts[] = {Activation::identity, Activation::relu, Activation::tanh};
  EncoderSpec spec;
  spec.input_dim = width(rng);
  spec.hidden.resize(depth(rng));
  for (auto& h : spec.hidden) h = width(rng) + 1;
  spec.feature_shape = {width(rng)};
  spec.hidden_activation = acts[pick(rng)];
  spec.feature_activation = acts[pick(rng)];
  Encoder enc = Encoder::mlp(spec, rng);
  // Nonzero biases keep relu pre-activations off the kink at 0.
  for (auto& layer : enc.layers()) layer.bias.value = random_tensor(layer.bias.value.shape(), rng, -0.5, 0.5);
  const std::size_t out = width(rng) + 1, n = rows(rng);
  TaskHead head = TaskHead::make(spec.feature_shape[0], out, 1, rng);
  head.layer.bias.value = random_tensor(head.layer.bias.value.shape(), rng);

  const LossKind kind = pick(rng) == 0 ? LossKind::mse : LossKind::cross_entropy;
  Samples batch;
  batch.inputs = random_tensor({n, spec.input_dim}, rng, -2, 2);
  if (kind == LossKind::cross_entropy) {
    std::uniform_int_distribution<int> label(0, static_cast<int>(out) - 1);
    for (std::size_t r = 0; r < n; ++r) batch.labels.push_back(label(rng));
  } else {
    batch.targets = random_tensor({n, out}, rng);
  }

  auto loss = [&] {
    Tape tape;
    return task_loss(tape, enc, head, batch, kind).value().item();
  };
  Tape tape;
  const Gradients g = tape.backward(task_loss(tape, enc, head, batch, kind));
  std::vector<Parameter*> params = enc.parameters();
  for (Parameter* p : head.parameters()) params.push_back(p);
  double worst = 0.0;
  for (Parameter* p : params) {
    const Tensor* analytic = g.find(*p);
    const Tensor numeric = numeric_grad(p->value, loss);
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      worst = std::max(worst, rel_err(analytic ? (*analytic)[k] : 0.0, numeric[k], 1e-6));
    }
  }
  return worst;
}

}  // namespace carl::testing
