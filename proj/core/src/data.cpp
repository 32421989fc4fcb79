#include "carl/data.hpp"

#include "carl/errors.hpp"

namespace carl {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::mse: return "mse";
    case LossKind::l1: return "l1";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "cross_entropy") return LossKind::cross_entropy;
  if (name == "mse") return LossKind::mse;
  if (name == "l1") return LossKind::l1;
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

Samples Samples::select(std::span<const std::size_t> indices) const {
  if (indices.empty()) return Samples{};
  std::vector<Tensor> xs, ys;
  Samples out;
  for (auto i : indices) {
    if (i >= size()) throw DimensionError("sample index " + std::to_string(i) + " out of range");
    xs.push_back(inputs.row(i));
    if (!labels.empty()) out.labels.push_back(labels[i]);
    if (targets.size() > 0) ys.push_back(targets.row(i));
  }
  out.inputs = Tensor::stack(xs);
  if (!ys.empty()) out.targets = Tensor::stack(ys);
  return out;
}

}  // namespace carl
