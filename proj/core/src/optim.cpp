#include "carl/optim.hpp"

#include <cmath>

#include "carl/errors.hpp"

namespace carl {

void validate(const OptimizerSpec& spec) {
  if (!(spec.learning_rate > 0.0) || !std::isfinite(spec.learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (spec.kind == OptimizerKind::adam) {
    if (!(spec.beta1 > 0.0 && spec.beta1 < 1.0) || !(spec.beta2 > 0.0 && spec.beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in (0, 1)");
    }
    if (!(spec.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  }
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(spec) { validate(spec_); }

void Optimizer::step(std::span<Parameter* const> params, const Gradients& grads) {
  // Resolve everything first so a missing gradient leaves all parameters untouched.
  std::vector<const Tensor*> resolved;
  resolved.reserve(params.size());
  for (Parameter* p : params) {
    const Tensor* g = grads.find(*p);
    if (g == nullptr) throw AutodiffError("missing gradient for parameter '" + p->name + "'");
    if (g->shape() != p->value.shape()) throw DimensionError("gradient shape mismatch for '" + p->name + "'");
    resolved.push_back(g);
  }

  const double lr = spec_.learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const Tensor& g = *resolved[k];
    auto w = p.value.data();
    if (spec_.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      continue;
    }
    Moments& mo = moments_[&p];
    if (mo.t == 0) {
      mo.m = Tensor(p.value.shape(), 0.0);
      mo.v = Tensor(p.value.shape(), 0.0);
    }
    ++mo.t;
    const double c1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(mo.t));
    const double c2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(mo.t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      mo.m[i] = spec_.beta1 * mo.m[i] + (1.0 - spec_.beta1) * g[i];
      mo.v[i] = spec_.beta2 * mo.v[i] + (1.0 - spec_.beta2) * g[i] * g[i];
      const double m_hat = mo.m[i] / c1;
      const double v_hat = mo.v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + spec_.epsilon);
    }
  }
}

}  // namespace carl
