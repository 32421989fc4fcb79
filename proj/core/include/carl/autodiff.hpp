#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape records every operation applied to its variables. Parameters are
// bound to a tape by reference; their adjoints live on the tape until
// backward() hands them out as a Gradients map, so two tapes built over the
// same parameters never see each other's gradient state.

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "carl/tensor.hpp"

namespace carl {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a scalar loss with respect to every parameter bound on the tape.
class Gradients {
 public:
  const Tensor* find(const Parameter& p) const;
  const Tensor& at(const Parameter& p) const;
  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void add(Parameter* p, Tensor grad);

 private:
  std::vector<std::pair<Parameter*, Tensor>> entries_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a value that never receives gradient.
  Var constant(Tensor value);
  /// Binds a trainable parameter. Binding the same parameter twice returns the same Var.
  Var parameter(Parameter& p);

  /// Records the result of an operation. `backward` is invoked only when some
  /// input requires gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds `g` into the adjoint of node `id`. Only valid inside backward().
  void accumulate(std::size_t id, const Tensor& g);

  /// Propagates d(loss)/d(node) back to all bound parameters, fills each
  /// parameter's `grad` slot, and returns the gradient map. The tape's
  /// intermediate adjoints stay readable through adjoint() afterwards.
  Gradients backward(Var loss);

  /// Adjoint of any recorded node after backward(); zero tensor if unreached.
  Tensor adjoint(Var v) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All inputs must live on the same tape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
/// x (n×m) + b (m), broadcasting b across rows.
Var add_bias(Var x, Var b);
/// a (n×k) · b (k×m).
Var matmul(Var a, Var b);
Var relu(Var x);
Var tanh(Var x);
/// Elementwise |x| with subgradient 0 at 0.
Var abs(Var x);
Var square(Var x);
Var exp(Var x);
Var sum(Var x);
Var mean(Var x);
Var reshape(Var x, Shape shape);
/// Mean over the listed axes; those axes are removed from the result shape.
Var mean_axes(Var x, std::vector<std::size_t> axes);
/// Concatenates 2-D inputs with equal row count along the column axis.
Var concat_cols(std::span<const Var> parts);
/// x (n×d) scaled per column by the constant w (d).
Var scale_cols(Var x, const Tensor& w);
/// Squared Euclidean distances between rows: a (n×d), b (m×d) -> (n×m).
Var pairwise_sq_dists(Var a, Var b);
/// Mean over rows of -log softmax(logits)[label]; logits is (n×C).
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace carl
