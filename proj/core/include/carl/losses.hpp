#pragma once

#include <span>
#include <vector>

#include "carl/autodiff.hpp"
#include "carl/data.hpp"
#include "carl/nn.hpp"

namespace carl {

/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);
/// Mean over every element of (pred - target)^2.
Var mse(Var pred, Var target);
/// Mean over every element of |pred - target|.
Var l1(Var pred, Var target);

/// ℓ(pred, y) averaged over the batch, for the given loss kind.
Var batch_loss(Var pred, const Samples& batch, LossKind kind);

/// Empirical task loss of h(g(x)) on `batch`.
Var task_loss(Tape& tape, Encoder& encoder, TaskHead& head, const Samples& batch, LossKind kind,
              Binding encoder_mode = Binding::tracked, Binding head_mode = Binding::tracked);

/// Same computation as task_loss over samples drawn from a replay buffer.
/// Throws EmptyBufferError when `replay_batch` is empty.
Var replay_loss(Tape& tape, Encoder& encoder, TaskHead& head, const Samples& replay_batch, LossKind kind,
                Binding encoder_mode = Binding::tracked, Binding head_mode = Binding::frozen);

/// Loss of each row of `pred` against its own target, without touching any tape.
std::vector<double> per_sample_losses(const Tensor& pred, const Samples& batch, LossKind kind);

}  // namespace carl
