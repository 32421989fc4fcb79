#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "carl/autodiff.hpp"
#include "carl/tensor.hpp"

namespace carl {

using Rng = std::mt19937_64;

enum class Activation { identity, relu, tanh };

struct DenseLayer {
  Parameter weight;  // (in × out)
  Parameter bias;    // (out)
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.value.dim(0); }
  std::size_t out_dim() const { return weight.value.dim(1); }
};

/// Glorot-uniform initialised dense layer: weights in ±sqrt(6/(in+out)), zero bias.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng, const std::string& name);

struct EncoderSpec {
  std::size_t input_dim = 20;
  std::vector<std::size_t> hidden = {64, 64};
  /// Either {n_f} (flat) or {n_f, w, h}.
  Shape feature_shape = {32};
  Activation hidden_activation = Activation::relu;
  Activation feature_activation = Activation::tanh;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

/// Shared encoder g(x): a stack of dense layers whose last output is viewed as feature_shape.
class Encoder {
 public:
  Encoder(std::vector<DenseLayer> layers, Shape feature_shape);

  static Encoder mlp(const EncoderSpec& spec, Rng& rng);

  std::size_t input_dim() const { return layers_.front().in_dim(); }
  const Shape& feature_shape() const noexcept { return feature_shape_; }
  std::size_t feature_dim() const { return shape_size(feature_shape_); }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<Parameter*> parameters();

 private:
  std::vector<DenseLayer> layers_;
  Shape feature_shape_;
};

/// Task-specific affine head h^i on flattened encoder features.
struct TaskHead {
  DenseLayer layer;
  int task_index = 1;

  static TaskHead make(std::size_t feature_dim, std::size_t output_dim, int task_index, Rng& rng);

  std::size_t input_dim() const { return layer.in_dim(); }
  std::size_t output_dim() const { return layer.out_dim(); }
  std::vector<Parameter*> parameters();
};

/// How a model's parameters enter a tape: tracked parameters collect gradients,
/// frozen ones are recorded as constants.
enum class Binding { tracked, frozen };

Var bind(Tape& tape, Parameter& p, Binding mode);

Var forward_dense(Tape& tape, DenseLayer& layer, Var x, Binding mode = Binding::tracked);

/// g(x) for a (batch × input_dim) input. Output shape is (batch, feature_shape...).
Var forward_encoder(Tape& tape, Encoder& encoder, Var batch, Binding mode = Binding::tracked);

/// Every layer's output in order; the last entry equals forward_encoder().
std::vector<Var> forward_encoder_layers(Tape& tape, Encoder& encoder, Var batch, Binding mode = Binding::tracked);

/// h(f) on features of shape (batch, ...), flattened per row. Output is (batch × output_dim).
Var forward_head(Tape& tape, TaskHead& head, Var features, Binding mode = Binding::tracked);

/// Flattens every axis after the first.
Var flatten_rows(Var x);

}  // namespace carl
