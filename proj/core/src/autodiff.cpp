#include "carl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "carl/errors.hpp"

namespace carl {

Tape& Var::tape() const {
  if (tape_ == nullptr) throw AutodiffError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

bool Var::requires_grad() const { return tape().requires_grad(id_); }

const Tensor* Gradients::find(const Parameter& p) const {
  for (const auto& [param, grad] : entries_) {
    if (param == &p) return &grad;
  }
  return nullptr;
}

const Tensor& Gradients::at(const Parameter& p) const {
  const Tensor* g = find(p);
  if (g == nullptr) throw AutodiffError("no gradient recorded for parameter '" + p.name + "'");
  return *g;
}

void Gradients::add(Parameter* p, Tensor grad) { entries_.emplace_back(p, std::move(grad)); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant recorded on tape");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' holds non-finite values");
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  bound_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("operation produced a non-finite value");
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](std::size_t id) { return nodes_.at(id).requires_grad; });
  nodes_.push_back(Node{std::move(value), std::move(inputs), needs ? std::move(backward) : BackwardFn{},
                        nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& adj = adjoints_[id];
  if (adj.size() == 0) {
    adj = g;
    return;
  }
  auto dst = adj.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Gradients Tape::backward(Var loss) {
  if (&loss.tape() != this) throw AutodiffError("loss belongs to a different tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw AutodiffError("backward() needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  if (!root.requires_grad) throw AutodiffError("loss is detached: no parameter on the tape reaches it");

  adjoints_.assign(nodes_.size(), Tensor{});
  adjoints_[loss.id()] = Tensor(root.value.shape(), 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || adjoints_[id].size() == 0) continue;
    const Tensor upstream = adjoints_[id];
    node.backward(*this, upstream);
  }

  Gradients out;
  for (auto& node : nodes_) {
    if (node.param == nullptr) continue;
    const std::size_t id = bound_.at(node.param);
    Tensor g = adjoints_[id].size() > 0 ? adjoints_[id] : Tensor(node.value.shape(), 0.0);
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter '" + node.param->name + "'");
    node.param->grad = g;
    out.add(node.param, std::move(g));
  }
  return out;
}

Tensor Tape::adjoint(Var v) const {
  if (v.id() < adjoints_.size() && adjoints_[v.id()].size() > 0) return adjoints_[v.id()];
  return Tensor(value(v.id()).shape(), 0.0);
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw AutodiffError("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    t.accumulate(bi, g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    Tensor neg = g;
    for (auto& v : neg.data()) v = -v;
    t.accumulate(bi, neg);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    Tensor ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bv[i];
      gb[i] = g[i] * av[i];
    }
    t.accumulate(ai, ga);
    t.accumulate(bi, gb);
  });
}

Var scale(Var a, double k) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= k;
  const auto ai = a.id();
  return a.tape().record(std::move(out), {ai}, [ai, k](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (auto& v : ga.data()) v *= k;
    t.accumulate(ai, ga);
  });
}

Var add_bias(Var x, Var b) {
  Tape& tape = same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  require_rank("add_bias", xv, 2);
  if (bv.size() != xv.dim(1)) {
    throw DimensionError("add_bias: bias of shape " + shape_string(bv.shape()) + " against input " +
                         shape_string(xv.shape()));
  }
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  Tensor out = xv;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bv[c];
  const auto xi = x.id(), bi = b.id();
  return tape.record(std::move(out), {xi, bi}, [xi, bi, n, m](Tape& t, const Tensor& g) {
    t.accumulate(xi, g);
    Tensor gb(t.value(bi).shape(), 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) gb[c] += g[r * m + c];
    t.accumulate(bi, gb);
  });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor out(Shape{n, m}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
    }
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {ai, bi}, [ai, bi, n, k, m](Tape& t, const Tensor& g) {
    if (t.requires_grad(ai)) {
      const Tensor& bval = t.value(bi);
      Tensor ga(Shape{n, k}, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bval[p * m + j];
          ga[i * k + p] = acc;
        }
      t.accumulate(ai, ga);
    }
    if (t.requires_grad(bi)) {
      const Tensor& aval = t.value(ai);
      Tensor gb(Shape{k, m}, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = aval[i * k + p];
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
        }
      t.accumulate(bi, gb);
    }
  });
}

namespace {

Var elementwise(Var x, double (*f)(double), double (*df)(double in, double out)) {
  Tape& tape = x.tape();
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const std::size_t xi = x.id();
  const std::size_t yi = tape.size();  // id the result will receive
  return tape.record(std::move(out), {xi}, [xi, yi, df](Tape& t, const Tensor& g) {
    const Tensor& in_v = t.value(xi);
    const Tensor& out_v = t.value(yi);
    Tensor gx(in_v.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * df(in_v[i], out_v[i]);
    t.accumulate(xi, gx);
  });
}

}  // namespace

Var relu(Var x) {
  return elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return elementwise(
      x, [](double v) { return std::tanh(v); }, [](double, double out) { return 1.0 - out * out; });
}

Var abs(Var x) {
  return elementwise(
      x, [](double v) { return std::abs(v); },
      [](double in, double) { return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  return elementwise(
      x, [](double v) { return v * v; }, [](double in, double) { return 2.0 * in; });
}

Var exp(Var x) {
  return elementwise(
      x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const auto xi = x.id();
  return x.tape().record(Tensor::scalar(s), {xi}, [xi](Tape& t, const Tensor& g) {
    t.accumulate(xi, Tensor(t.value(xi).shape(), g.item()));
  });
}

Var mean(Var x) {
  const Tensor& xv = x.value();
  const double n = static_cast<double>(xv.size());
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const auto xi = x.id();
  return x.tape().record(Tensor::scalar(s / n), {xi}, [xi, n](Tape& t, const Tensor& g) {
    t.accumulate(xi, Tensor(t.value(xi).shape(), g.item() / n));
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& t, const Tensor& g) {
    t.accumulate(xi, g.reshaped(t.value(xi).shape()));
  });
}

Var mean_axes(Var x, std::vector<std::size_t> axes) {
  const Tensor& xv = x.value();
  const Shape& in_shape = xv.shape();
  std::vector<bool> reduced(in_shape.size(), false);
  for (auto a : axes) {
    if (a >= in_shape.size()) {
      throw DimensionError("mean_axes: axis " + std::to_string(a) + " out of range for " + shape_string(in_shape));
    }
    reduced[a] = true;
  }
  Shape out_shape;
  std::size_t group = 1;
  for (std::size_t a = 0; a < in_shape.size(); ++a) {
    if (reduced[a]) group *= in_shape[a];
    else out_shape.push_back(in_shape[a]);
  }

  // Map every input element to its output slot.
  auto target = std::make_shared<std::vector<std::size_t>>(xv.size());
  std::vector<std::size_t> idx(in_shape.size(), 0);
  for (std::size_t flat = 0; flat < xv.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t a = 0; a < in_shape.size(); ++a) {
      if (!reduced[a]) o = o * in_shape[a] + idx[a];
    }
    (*target)[flat] = o;
    for (std::size_t a = in_shape.size(); a-- > 0;) {
      if (++idx[a] < in_shape[a]) break;
      idx[a] = 0;
    }
  }

  Tensor out(out_shape, 0.0);
  for (std::size_t flat = 0; flat < xv.size(); ++flat) out[(*target)[flat]] += xv[flat];
  const double inv = 1.0 / static_cast<double>(group);
  for (auto& v : out.data()) v *= inv;

  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, target, inv](Tape& t, const Tensor& g) {
    Tensor gx(t.value(xi).shape());
    for (std::size_t flat = 0; flat < gx.size(); ++flat) gx[flat] = g[(*target)[flat]] * inv;
    t.accumulate(xi, gx);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& tape = parts.front().tape();
  const std::size_t n = parts.front().value().dim(0);
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &tape) throw AutodiffError("operands recorded on different tapes");
    require_rank("concat_cols", p.value(), 2);
    if (p.value().dim(0) != n) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(p.value().shape()) + " vs " +
                           shape_string(parts.front().value().shape()));
    }
    ids.push_back(p.id());
    widths.push_back(p.value().dim(1));
    total += p.value().dim(1);
  }
  Tensor out(Shape{n, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + offset + c] = pv[r * widths[k] + c];
    offset += widths[k];
  }
  return tape.record(std::move(out), ids, [ids, widths, n, total](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor gk(Shape{n, widths[k]});
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] = g[r * total + off + c];
      t.accumulate(ids[k], gk);
      off += widths[k];
    }
  });
}

Var scale_cols(Var x, const Tensor& w) {
  const Tensor& xv = x.value();
  require_rank("scale_cols", xv, 2);
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  if (w.size() != d) {
    throw DimensionError("scale_cols: weights of length " + std::to_string(w.size()) + " against input " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= w[c];
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, w, n, d](Tape& t, const Tensor& g) {
    Tensor gx = g;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] *= w[c];
    t.accumulate(xi, gx);
  });
}

Var pairwise_sq_dists(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("pairwise_sq_dists", av, 2);
  require_rank("pairwise_sq_dists", bv, 2);
  const std::size_t n = av.dim(0), m = bv.dim(0), d = av.dim(1);
  if (bv.dim(1) != d) {
    throw DimensionError("pairwise_sq_dists: shape mismatch " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  Tensor out(Shape{n, m}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = av[i * d + k] - bv[j * d + k];
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {ai, bi}, [ai, bi, n, m, d](Tape& t, const Tensor& g) {
    const Tensor& aval = t.value(ai);
    const Tensor& bval = t.value(bi);
    Tensor ga(Shape{n, d}, 0.0), gb(Shape{m, d}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double gij = g[i * m + j];
        if (gij == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = 2.0 * gij * (aval[i * d + k] - bval[j * d + k]);
          ga[i * d + k] += diff;
          gb[j * d + k] -= diff;
        }
      }
    t.accumulate(ai, ga);
    t.accumulate(bi, gb);
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  require_rank("softmax_cross_entropy", lv, 2);
  const std::size_t n = lv.dim(0), c = lv.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(lv.shape()));
  }
  auto probs = std::make_shared<Tensor>(Shape{n, c});
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw ValueError("label " + std::to_string(label) + " out of range [0, " + std::to_string(c) + ")");
    }
    double mx = lv[r * c];
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, lv[r * c + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(lv[r * c + k] - mx);
    const double lse = mx + std::log(z);
    total += lse - lv[r * c + static_cast<std::size_t>(label)];
    for (std::size_t k = 0; k < c; ++k) (*probs)[r * c + k] = std::exp(lv[r * c + k] - lse);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  const auto li = logits.id();
  return logits.tape().record(
      Tensor::scalar(total / static_cast<double>(n)), {li}, [li, probs, lab, n, c](Tape& t, const Tensor& g) {
        Tensor gl = *probs;
        const double s = g.item() / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
          gl[r * c + static_cast<std::size_t>(lab[r])] -= 1.0;
          for (std::size_t k = 0; k < c; ++k) gl[r * c + k] *= s;
        }
        t.accumulate(li, gl);
      });
}

}  // namespace carl
