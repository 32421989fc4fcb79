#pragma once

#include <span>
#include <unordered_map>

#include "carl/autodiff.hpp"
#include "carl/tensor.hpp"

namespace carl {

enum class OptimizerKind { sgd, adam };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

void validate(const OptimizerSpec& spec);

/// Plain SGD or Adam. Adam moments are kept per parameter address, so the
/// parameters must outlive the optimizer and must not move.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec);

  const OptimizerSpec& spec() const noexcept { return spec_; }

  /// Updates each parameter in `params` using its entry in `grads`.
  void step(std::span<Parameter* const> params, const Gradients& grads);

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    long long t = 0;
  };

  OptimizerSpec spec_;
  std::unordered_map<const Parameter*, Moments> moments_;
};

}  // namespace carl
