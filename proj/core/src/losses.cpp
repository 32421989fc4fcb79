#include "carl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "carl/errors.hpp"

namespace carl {

Var cross_entropy(Var logits, std::span<const int> labels) {
  if (logits.value().rank() != 2 || logits.value().dim(0) == 0) {
    throw DimensionError("cross_entropy expects (batch × classes) logits");
  }
  return softmax_cross_entropy(logits, labels);
}

namespace {
void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": prediction " + shape_string(a.shape()) + " vs target " +
                         shape_string(b.shape()));
  }
}
}  // namespace

Var mse(Var pred, Var target) {
  require_same("mse", pred.value(), target.value());
  return mean(square(sub(pred, target)));
}

Var l1(Var pred, Var target) {
  require_same("l1", pred.value(), target.value());
  return mean(abs(sub(pred, target)));
}

Var batch_loss(Var pred, const Samples& batch, LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy: return cross_entropy(pred, batch.labels);
    case LossKind::mse: return mse(pred, pred.tape().constant(batch.targets));
    case LossKind::l1: return l1(pred, pred.tape().constant(batch.targets));
  }
  throw ValueError("unknown loss kind");
}

Var task_loss(Tape& tape, Encoder& encoder, TaskHead& head, const Samples& batch, LossKind kind,
              Binding encoder_mode, Binding head_mode) {
  if (batch.empty()) throw DimensionError("task_loss on an empty batch");
  Var f = forward_encoder(tape, encoder, tape.constant(batch.inputs), encoder_mode);
  return batch_loss(forward_head(tape, head, f, head_mode), batch, kind);
}

Var replay_loss(Tape& tape, Encoder& encoder, TaskHead& head, const Samples& replay_batch, LossKind kind,
                Binding encoder_mode, Binding head_mode) {
  if (replay_batch.empty()) {
    throw EmptyBufferError("replay batch for task " + std::to_string(head.task_index) + " is empty");
  }
  return task_loss(tape, encoder, head, replay_batch, kind, encoder_mode, head_mode);
}

std::vector<double> per_sample_losses(const Tensor& pred, const Samples& batch, LossKind kind) {
  const std::size_t n = pred.dim(0);
  const std::size_t k = pred.size() / n;
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (kind == LossKind::cross_entropy) {
      const int label = batch.labels.at(r);
      if (label < 0 || static_cast<std::size_t>(label) >= k) throw ValueError("label out of range");
      double mx = pred[r * k];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, pred[r * k + c]);
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) z += std::exp(pred[r * k + c] - mx);
      out[r] = mx + std::log(z) - pred[r * k + static_cast<std::size_t>(label)];
    } else {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = pred[r * k + c] - batch.targets[r * k + c];
        s += kind == LossKind::mse ? d * d : std::abs(d);
      }
      out[r] = s / static_cast<double>(k);
    }
  }
  return out;
}

}  // namespace carl
