#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "carl/autodiff.hpp"
#include "carl/nn.hpp"
#include "carl/tensor.hpp"

namespace carl {

/// Average-pooling compression of encoder activations.
///   none            -> flattened feature
///   spatial         -> mean over the w·h positions of each channel (length n_f)
///   channel         -> mean over channels at each position (length w·h)
///   spatial_channel -> spatial followed by channel (length n_f + w·h)
enum class CompressionKind { none, spatial, channel, spatial_channel };

enum class FmLossKind { l2, l1, l1_plus_l2, weighted_l1, weighted_l2, mmd };

/// Reduction of per-component feature-matching terms: mean over all
/// components, or per-row sum averaged over rows.
enum class FmReduction { mean, sum };

std::string_view to_string(CompressionKind kind);
std::string_view to_string(FmLossKind kind);
std::string_view to_string(FmReduction kind);
CompressionKind parse_compression_kind(std::string_view name);
FmLossKind parse_fm_loss_kind(std::string_view name);
FmReduction parse_fm_reduction(std::string_view name);

inline bool is_weighted(FmLossKind kind) { return kind == FmLossKind::weighted_l1 || kind == FmLossKind::weighted_l2; }

/// Length of c(f) for an unbatched feature of the given shape.
std::size_t compressed_dim(const Shape& feature_shape, CompressionKind kind);

/// c(f) for a batch of features shaped (batch, n_f) or (batch, n_f, w, h). Result is (batch × dim).
Var compress(Var features, CompressionKind kind);

/// c(f) for one unbatched feature tensor, shaped (n_f) or (n_f, w, h).
Tensor compress(const Tensor& feature, CompressionKind kind);

/// Compresses each layer's batched activations and concatenates the results in layer order.
Var compress_multilayer(std::span<const Var> per_layer_features, CompressionKind kind);

/// Which encoder activations feed the compression.
enum class FeatureSource { final_layer, all_layers };

std::string_view to_string(FeatureSource source);
FeatureSource parse_feature_source(std::string_view name);

/// Compressed dimension of c(·) applied to `encoder` under `source`.
std::size_t compressed_dim(const Encoder& encoder, CompressionKind kind, FeatureSource source);

/// c(g(x)) for a batch of inputs: the compressed final activation, or the
/// concatenation of every compressed layer activation for all_layers.
Var compressed_features(Tape& tape, Encoder& encoder, Var inputs, CompressionKind kind, FeatureSource source,
                        Binding mode = Binding::tracked);

/// ℓ_fm(a, b). `a` and `b` are equally shaped vectors or (batch × d) matrices.
/// Weighted kinds need `weights` of length d with nonnegative entries.
Var fm_loss(Var a, Var b, FmLossKind kind, const Tensor* weights = nullptr,
            FmReduction reduction = FmReduction::mean);

struct MmdResult {
  Var value;
  double bandwidth = 1.0;
  /// Set when the pooled median distance was zero and bandwidth 1 was used instead.
  bool fallback_bandwidth = false;
};

/// Biased (V-statistic) MMD² between the row sets of a (n×d) and b (m×d) with
/// an RBF kernel exp(-|x-y|²/(2σ²)); σ is the median pairwise distance of the
/// pooled rows and is treated as a constant for differentiation.
MmdResult mmd(Var a, Var b);

/// Running mean of |∂ℓ/∂f| per compressed-feature component.
class FeatureWeightAccumulator {
 public:
  explicit FeatureWeightAccumulator(std::size_t dim = 0) : mean_(dim, 0.0) {}

  void accumulate(std::span<const double> grad_f);
  /// Weights with mean 1 (uniform ones if every magnitude is zero).
  std::vector<double> finalize() const;

  std::size_t dim() const noexcept { return mean_.size(); }
  std::size_t count() const noexcept { return count_; }
  const std::vector<double>& running_mean() const noexcept { return mean_; }

 private:
  std::vector<double> mean_;
  std::size_t count_ = 0;
};

/// Free-function forms of the accumulator operations.
void accumulate_weights(FeatureWeightAccumulator& acc, std::span<const double> grad_f);
std::vector<double> finalize_weights(const FeatureWeightAccumulator& acc);

}  // namespace carl
