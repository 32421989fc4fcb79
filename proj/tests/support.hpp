#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "carl/autodiff.hpp"
#include "carl/data.hpp"
#include "carl/nn.hpp"
#include "carl/tensor.hpp"

namespace carl::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline Parameter random_param(const std::string& name, const Shape& shape, Rng& rng) {
  Tensor v = random_tensor(shape, rng);
  return Parameter{name, v, Tensor(shape)};
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central differences of `loss()` with respect to every entry of `value`.
inline Tensor numeric_grad(Tensor& value, const std::function<double()>& loss, double h = 1e-5) {
  Tensor g(value.shape());
  for (std::size_t k = 0; k < value.size(); ++k) {
    const double saved = value[k];
    value[k] = saved + h;
    const double up = loss();
    value[k] = saved - h;
    const double down = loss();
    value[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, rel_err(a[k], b[k]));
  return worst;
}

inline DenseLayer dense(Tensor w, Tensor b, Activation act) {
  return DenseLayer{Parameter{"w", std::move(w), {}}, Parameter{"b", std::move(b), {}}, act};
}

/// Single-layer encoder computing act(x·W).
inline Encoder linear_encoder(Tensor w, Activation act = Activation::identity) {
  const std::size_t out = w.dim(1);
  return Encoder({dense(std::move(w), Tensor(Shape{out}), act)}, Shape{out});
}

inline Tensor identity_matrix(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

inline Samples classification_samples(const Tensor& x, std::vector<int> labels) {
  Samples s;
  s.inputs = x;
  s.labels = std::move(labels);
  return s;
}

inline Samples regression_samples(const Tensor& x, const Tensor& y) {
  Samples s;
  s.inputs = x;
  s.targets = y;
  return s;
}

}  // namespace carl::testing
