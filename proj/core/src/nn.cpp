#include "carl/nn.hpp"

#include <cmath>
#include <string>

#include "carl/errors.hpp"

namespace carl {

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng, const std::string& name) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w(Shape{in, out});
  for (auto& v : w.data()) v = dist(rng);
  return DenseLayer{Parameter{name + ".weight", std::move(w), {}}, Parameter{name + ".bias", Tensor(Shape{out}, 0.0), {}},
                    act};
}

Encoder::Encoder(std::vector<DenseLayer> layers, Shape feature_shape)
    : layers_(std::move(layers)), feature_shape_(std::move(feature_shape)) {
  if (layers_.empty()) throw DimensionError("encoder needs at least one layer");
  if (feature_shape_.size() != 1 && feature_shape_.size() != 3) {
    throw DimensionError("feature shape must be flat or 3-axis, got " + shape_string(feature_shape_));
  }
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_dim() != layers_[i - 1].out_dim()) {
      throw DimensionError("encoder layer " + std::to_string(i) + " expects input " +
                           std::to_string(layers_[i].in_dim()) + " but previous layer emits " +
                           std::to_string(layers_[i - 1].out_dim()));
    }
  }
  if (layers_.back().out_dim() != shape_size(feature_shape_)) {
    throw DimensionError("last encoder layer emits " + std::to_string(layers_.back().out_dim()) +
                         " values, feature shape " + shape_string(feature_shape_) + " needs " +
                         std::to_string(shape_size(feature_shape_)));
  }
}

Encoder Encoder::mlp(const EncoderSpec& spec, Rng& rng) {
  std::vector<DenseLayer> layers;
  std::size_t in = spec.input_dim;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    layers.push_back(make_dense(in, spec.hidden[i], spec.hidden_activation, rng, "encoder." + std::to_string(i)));
    in = spec.hidden[i];
  }
  layers.push_back(make_dense(in, shape_size(spec.feature_shape), spec.feature_activation, rng,
                              "encoder." + std::to_string(spec.hidden.size())));
  return Encoder(std::move(layers), spec.feature_shape);
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

TaskHead TaskHead::make(std::size_t feature_dim, std::size_t output_dim, int task_index, Rng& rng) {
  if (task_index < 1) throw ValueError("task index must be >= 1");
  return TaskHead{make_dense(feature_dim, output_dim, Activation::identity, rng, "head" + std::to_string(task_index)),
                  task_index};
}

std::vector<Parameter*> TaskHead::parameters() { return {&layer.weight, &layer.bias}; }

Var bind(Tape& tape, Parameter& p, Binding mode) {
  return mode == Binding::tracked ? tape.parameter(p) : tape.constant(p.value);
}

Var forward_dense(Tape& tape, DenseLayer& layer, Var x, Binding mode) {
  if (x.value().rank() != 2 || x.value().dim(1) != layer.in_dim()) {
    throw DimensionError("dense layer expects (batch, " + std::to_string(layer.in_dim()) + "), got " +
                         shape_string(x.value().shape()));
  }
  Var y = add_bias(matmul(x, bind(tape, layer.weight, mode)), bind(tape, layer.bias, mode));
  switch (layer.activation) {
    case Activation::relu: return relu(y);
    case Activation::tanh: return tanh(y);
    case Activation::identity: break;
  }
  return y;
}

std::vector<Var> forward_encoder_layers(Tape& tape, Encoder& encoder, Var batch, Binding mode) {
  const Tensor& x = batch.value();
  if (x.rank() != 2 || x.dim(1) != encoder.input_dim()) {
    throw DimensionError("encoder expects input (batch, " + std::to_string(encoder.input_dim()) + "), got " +
                         shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  std::vector<Var> outs;
  Var h = batch;
  for (auto& layer : encoder.layers()) {
    h = forward_dense(tape, layer, h, mode);
    outs.push_back(h);
  }
  if (encoder.feature_shape().size() > 1) {
    Shape s{n};
    s.insert(s.end(), encoder.feature_shape().begin(), encoder.feature_shape().end());
    outs.back() = reshape(outs.back(), std::move(s));
  }
  return outs;
}

Var forward_encoder(Tape& tape, Encoder& encoder, Var batch, Binding mode) {
  return forward_encoder_layers(tape, encoder, batch, mode).back();
}

Var flatten_rows(Var x) {
  const Tensor& v = x.value();
  if (v.rank() == 2) return x;
  if (v.rank() < 2) throw DimensionError("flatten_rows needs a batch axis, got " + shape_string(v.shape()));
  return reshape(x, Shape{v.dim(0), v.size() / v.dim(0)});
}

Var forward_head(Tape& tape, TaskHead& head, Var features, Binding mode) {
  Var flat = flatten_rows(features);
  if (flat.value().dim(1) != head.input_dim()) {
    throw DimensionError("head " + std::to_string(head.task_index) + " expects " + std::to_string(head.input_dim()) +
                         " features, got " + shape_string(features.value().shape()));
  }
  return forward_dense(tape, head.layer, flat, mode);
}

}  // namespace carl
