#include "carl/compression.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "carl/errors.hpp"
#include "carl/nn.hpp"

namespace carl {

std::string_view to_string(CompressionKind kind) {
  switch (kind) {
    case CompressionKind::none: return "none";
    case CompressionKind::spatial: return "spatial";
    case CompressionKind::channel: return "channel";
    case CompressionKind::spatial_channel: return "spatial_channel";
  }
  return "?";
}

std::string_view to_string(FmLossKind kind) {
  switch (kind) {
    case FmLossKind::l2: return "l2";
    case FmLossKind::l1: return "l1";
    case FmLossKind::l1_plus_l2: return "l1_plus_l2";
    case FmLossKind::weighted_l1: return "weighted_l1";
    case FmLossKind::weighted_l2: return "weighted_l2";
    case FmLossKind::mmd: return "mmd";
  }
  return "?";
}

std::string_view to_string(FmReduction kind) { return kind == FmReduction::mean ? "mean" : "sum"; }

CompressionKind parse_compression_kind(std::string_view name) {
  if (name == "none") return CompressionKind::none;
  if (name == "spatial") return CompressionKind::spatial;
  if (name == "channel") return CompressionKind::channel;
  if (name == "spatial_channel") return CompressionKind::spatial_channel;
  throw ConfigError("unknown compression kind '" + std::string(name) + "'");
}

FmLossKind parse_fm_loss_kind(std::string_view name) {
  if (name == "l2") return FmLossKind::l2;
  if (name == "l1") return FmLossKind::l1;
  if (name == "l1_plus_l2") return FmLossKind::l1_plus_l2;
  if (name == "weighted_l1") return FmLossKind::weighted_l1;
  if (name == "weighted_l2") return FmLossKind::weighted_l2;
  if (name == "mmd") return FmLossKind::mmd;
  throw ConfigError("unknown feature-matching loss '" + std::string(name) + "'");
}

FmReduction parse_fm_reduction(std::string_view name) {
  if (name == "mean") return FmReduction::mean;
  if (name == "sum") return FmReduction::sum;
  throw ConfigError("unknown feature-matching reduction '" + std::string(name) + "'");
}

namespace {

[[noreturn]] void flat_pooling_error(CompressionKind kind, const Shape& shape) {
  throw DimensionError(std::string(to_string(kind)) + " pooling needs a 3-axis (n_f × w × h) feature, got " +
                       shape_string(shape));
}

}  // namespace

std::size_t compressed_dim(const Shape& feature_shape, CompressionKind kind) {
  if (kind == CompressionKind::none) return shape_size(feature_shape);
  if (feature_shape.size() != 3) flat_pooling_error(kind, feature_shape);
  const std::size_t nf = feature_shape[0];
  const std::size_t wh = feature_shape[1] * feature_shape[2];
  switch (kind) {
    case CompressionKind::spatial: return nf;
    case CompressionKind::channel: return wh;
    case CompressionKind::spatial_channel: return nf + wh;
    case CompressionKind::none: break;
  }
  return shape_size(feature_shape);
}

Var compress(Var features, CompressionKind kind) {
  const Shape s = features.value().shape();
  if (s.size() < 2) throw DimensionError("compress expects a batch axis, got " + shape_string(s));
  const std::size_t n = s[0];
  if (kind == CompressionKind::none) return flatten_rows(features);
  if (s.size() != 4) flat_pooling_error(kind, Shape(s.begin() + 1, s.end()));
  switch (kind) {
    case CompressionKind::spatial: return mean_axes(features, {2, 3});
    case CompressionKind::channel: return reshape(mean_axes(features, {1}), Shape{n, s[2] * s[3]});
    case CompressionKind::spatial_channel: {
      const Var parts[] = {compress(features, CompressionKind::spatial), compress(features, CompressionKind::channel)};
      return concat_cols(parts);
    }
    case CompressionKind::none: break;
  }
  return flatten_rows(features);
}

Tensor compress(const Tensor& feature, CompressionKind kind) {
  Shape batched{1};
  batched.insert(batched.end(), feature.shape().begin(), feature.shape().end());
  Tape scratch;
  Var out = compress(scratch.constant(feature.reshaped(batched)), kind);
  return out.value().row(0);
}

Var compress_multilayer(std::span<const Var> per_layer_features, CompressionKind kind) {
  if (per_layer_features.empty()) throw DimensionError("compress_multilayer needs at least one layer");
  std::vector<Var> parts;
  parts.reserve(per_layer_features.size());
  for (const Var& f : per_layer_features) parts.push_back(compress(f, kind));
  if (parts.size() == 1) return parts.front();
  return concat_cols(parts);
}

namespace {

Var as_matrix(Var v) {
  const Tensor& t = v.value();
  if (t.rank() == 2) return v;
  if (t.rank() == 1) return reshape(v, Shape{1, t.size()});
  throw DimensionError("feature-matching operands must be vectors or (batch × d) matrices, got " +
                       shape_string(t.shape()));
}

Var reduce(Var terms, FmReduction reduction) {
  Var m = mean(terms);
  if (reduction == FmReduction::mean) return m;
  return scale(m, static_cast<double>(terms.value().dim(1)));
}

double median(std::vector<double> values) {
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

Var fm_loss(Var a, Var b, FmLossKind kind, const Tensor* weights, FmReduction reduction) {
  if (a.value().shape() != b.value().shape()) {
    throw DimensionError("fm_loss: length mismatch " + shape_string(a.value().shape()) + " vs " +
                         shape_string(b.value().shape()));
  }
  if (kind == FmLossKind::mmd) {
    if (a.value().rank() != 2 || a.value().dim(0) < 2) {
      throw DimensionError("mmd feature matching needs a batch of at least 2 rows, got " +
                           shape_string(a.value().shape()));
    }
    return mmd(a, b).value;
  }
  Var am = as_matrix(a), bm = as_matrix(b);
  const std::size_t d = am.value().dim(1);
  if (is_weighted(kind)) {
    if (weights == nullptr) throw ValueError(std::string(to_string(kind)) + " needs a weight vector");
    if (weights->size() != d) {
      throw DimensionError("fm_loss: " + std::to_string(weights->size()) + " weights for " + std::to_string(d) +
                           " components");
    }
    for (double w : weights->data()) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValueError("fm_loss weights must be finite and nonnegative");
    }
  } else if (weights != nullptr) {
    throw ValueError(std::string(to_string(kind)) + " does not take weights");
  }

  Var diff = sub(am, bm);
  switch (kind) {
    case FmLossKind::l2: return reduce(square(diff), reduction);
    case FmLossKind::l1: return reduce(abs(diff), reduction);
    case FmLossKind::l1_plus_l2: return add(reduce(abs(diff), reduction), reduce(square(diff), reduction));
    case FmLossKind::weighted_l1: return reduce(scale_cols(abs(diff), *weights), reduction);
    case FmLossKind::weighted_l2: return reduce(scale_cols(square(diff), *weights), reduction);
    case FmLossKind::mmd: break;
  }
  throw ValueError("unhandled feature-matching loss");
}

MmdResult mmd(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
    throw DimensionError("mmd: incompatible batches " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
  }
  if (av.dim(0) < 2 || bv.dim(0) < 2) throw DimensionError("mmd needs at least 2 rows on each side");

  const std::size_t n = av.dim(0), m = bv.dim(0), d = av.dim(1);
  auto row = [&](std::size_t i) -> const double* { return i < n ? av.data().data() + i * d : bv.data().data() + (i - n) * d; };
  std::vector<double> dists;
  dists.reserve((n + m) * (n + m - 1) / 2);
  for (std::size_t i = 0; i < n + m; ++i)
    for (std::size_t j = i + 1; j < n + m; ++j) {
      double s = 0.0;
      const double* x = row(i);
      const double* y = row(j);
      for (std::size_t k = 0; k < d; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      dists.push_back(std::sqrt(s));
    }

  MmdResult result;
  const double med = median(std::move(dists));
  if (med > 0.0) {
    result.bandwidth = med;
  } else {
    result.bandwidth = 1.0;
    result.fallback_bandwidth = true;
  }
  const double gamma = -1.0 / (2.0 * result.bandwidth * result.bandwidth);
  Var kaa = mean(exp(scale(pairwise_sq_dists(a, a), gamma)));
  Var kbb = mean(exp(scale(pairwise_sq_dists(b, b), gamma)));
  Var kab = mean(exp(scale(pairwise_sq_dists(a, b), gamma)));
  result.value = sub(add(kaa, kbb), scale(kab, 2.0));
  return result;
}

std::string_view to_string(FeatureSource source) {
  return source == FeatureSource::final_layer ? "final_layer" : "all_layers";
}

FeatureSource parse_feature_source(std::string_view name) {
  if (name == "final_layer") return FeatureSource::final_layer;
  if (name == "all_layers") return FeatureSource::all_layers;
  throw ConfigError("unknown feature source '" + std::string(name) + "'");
}

std::size_t compressed_dim(const Encoder& encoder, CompressionKind kind, FeatureSource source) {
  if (source == FeatureSource::final_layer) return compressed_dim(encoder.feature_shape(), kind);
  std::size_t total = 0;
  const auto& layers = encoder.layers();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) total += compressed_dim(Shape{layers[i].out_dim()}, kind);
  return total + compressed_dim(encoder.feature_shape(), kind);
}

Var compressed_features(Tape& tape, Encoder& encoder, Var inputs, CompressionKind kind, FeatureSource source,
                        Binding mode) {
  if (source == FeatureSource::final_layer) return compress(forward_encoder(tape, encoder, inputs, mode), kind);
  const auto layers = forward_encoder_layers(tape, encoder, inputs, mode);
  return compress_multilayer(layers, kind);
}

void FeatureWeightAccumulator::accumulate(std::span<const double> grad_f) {
  if (grad_f.size() != mean_.size()) {
    throw DimensionError("accumulate_weights: gradient of length " + std::to_string(grad_f.size()) +
                         " for accumulator of length " + std::to_string(mean_.size()));
  }
  const double denom = static_cast<double>(count_ + 1);
  for (std::size_t k = 0; k < mean_.size(); ++k) mean_[k] += (std::abs(grad_f[k]) - mean_[k]) / denom;
  ++count_;
}

std::vector<double> FeatureWeightAccumulator::finalize() const {
  if (count_ == 0) throw ValueError("finalize_weights: no gradients accumulated");
  double total = 0.0;
  for (double v : mean_) total += v;
  const double avg = total / static_cast<double>(mean_.size());
  std::vector<double> w(mean_.size(), 1.0);
  if (avg <= 0.0) return w;
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = mean_[k] / avg;
  return w;
}

void accumulate_weights(FeatureWeightAccumulator& acc, std::span<const double> grad_f) { acc.accumulate(grad_f); }

std::vector<double> finalize_weights(const FeatureWeightAccumulator& acc) { return acc.finalize(); }

}  // namespace carl
