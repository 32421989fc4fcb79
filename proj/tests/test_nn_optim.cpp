#include <gtest/gtest.h>

#include <cmath>

#include "carl/errors.hpp"
#include "carl/nn.hpp"
#include "carl/optim.hpp"
#include "support.hpp"

using namespace carl;
using carl::testing::dense;
using carl::testing::random_tensor;

namespace {

Tensor run_encoder(Encoder& enc, const Tensor& x) {
  Tape tape;
  return forward_encoder(tape, enc, tape.constant(x)).value();
}

}  // namespace

TEST(Encoder, IdentityWeightsPassInputThrough) {
  Encoder enc({dense(Tensor::matrix({{1, 0}, {0, 1}}), Tensor(Shape{2}), Activation::identity)}, Shape{2});
  EXPECT_EQ(run_encoder(enc, Tensor::matrix({{1, 2}})), Tensor::matrix({{1, 2}}));
}

TEST(Encoder, ZeroWeightsGiveZeroFeatures) {
  Rng rng(1);
  Encoder enc = Encoder::mlp(EncoderSpec{3, {4}, {2}, Activation::relu, Activation::tanh}, rng);
  for (auto& layer : enc.layers()) {
    for (double& v : layer.weight.value.data()) v = 0.0;
  }
  const Tensor f = run_encoder(enc, random_tensor({5, 3}, rng));
  for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, MatchesStraightLineOracle) {
  Rng rng(2);
  Encoder enc = Encoder::mlp(EncoderSpec{4, {6}, {3}, Activation::relu, Activation::relu}, rng);
  for (auto& layer : enc.layers()) layer.bias.value = random_tensor(layer.bias.value.shape(), rng);
  const Tensor x = random_tensor({5, 4}, rng);
  const Tensor f = run_encoder(enc, x);

  Tensor act = x;
  for (const auto& layer : enc.layers()) {
    const std::size_t n = act.dim(0), in = layer.in_dim(), out = layer.out_dim();
    Tensor next(Shape{n, out});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < out; ++c) {
        double s = layer.bias.value[c];
        for (std::size_t k = 0; k < in; ++k) s += act.at(r, k) * layer.weight.value.at(k, c);
        next.at(r, c) = std::max(0.0, s);
      }
    act = next;
  }
  EXPECT_LT(max_abs_diff(f, act), 1e-12);
}

TEST(Encoder, GlorotBoundsAndSeeding) {
  Rng a(7), b(7);
  Encoder e1 = Encoder::mlp(EncoderSpec{}, a);
  Encoder e2 = Encoder::mlp(EncoderSpec{}, b);
  for (std::size_t k = 0; k < e1.layers().size(); ++k) {
    const auto& l = e1.layers()[k];
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    for (double v : l.weight.value.data()) EXPECT_LE(std::abs(v), bound);
    for (double v : l.bias.value.data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(l.weight.value, e2.layers()[k].weight.value);
  }
}

TEST(Encoder, ThreeAxisFeatureShape) {
  Rng rng(3);
  Encoder enc = Encoder::mlp(EncoderSpec{4, {5}, {2, 3, 3}, Activation::relu, Activation::relu}, rng);
  EXPECT_EQ(enc.feature_dim(), 18u);
  EXPECT_EQ(run_encoder(enc, random_tensor({2, 4}, rng)).shape(), (Shape{2, 2, 3, 3}));
}

TEST(Encoder, RejectsIncompatibleLayers) {
  std::vector<DenseLayer> layers{dense(Tensor(Shape{2, 3}), Tensor(Shape{3}), Activation::relu),
                                 dense(Tensor(Shape{4, 2}), Tensor(Shape{2}), Activation::relu)};
  EXPECT_THROW(Encoder(layers, Shape{2}), DimensionError);
  EXPECT_THROW(Encoder({dense(Tensor(Shape{2, 3}), Tensor(Shape{3}), Activation::relu)}, Shape{4}), DimensionError);
}

TEST(Head, IdentityAndBiasOnly) {
  TaskHead id{dense(Tensor::matrix({{1, 0}, {0, 1}}), Tensor(Shape{2}), Activation::identity), 1};
  Tape tape;
  EXPECT_EQ(forward_head(tape, id, tape.constant(Tensor::matrix({{3, -1}}))).value(), Tensor::matrix({{3, -1}}));

  TaskHead bias{dense(Tensor(Shape{2, 3}), Tensor::vector({1, 2, 3}), Activation::identity), 1};
  const Tensor out = forward_head(tape, bias, tape.constant(Tensor::matrix({{5, 6}, {-1, 0}}))).value();
  EXPECT_EQ(out, Tensor::matrix({{1, 2, 3}, {1, 2, 3}}));
}

TEST(Head, MatchesAffineOracle) {
  Rng rng(4);
  TaskHead head = TaskHead::make(4, 3, 2, rng);
  head.layer.bias.value = random_tensor({3}, rng);
  const Tensor f = random_tensor({5, 4}, rng);
  Tape tape;
  const Tensor out = forward_head(tape, head, tape.constant(f)).value();
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = head.layer.bias.value[c];
      for (std::size_t k = 0; k < 4; ++k) s += f.at(r, k) * head.layer.weight.value.at(k, c);
      EXPECT_NEAR(out.at(r, c), s, 1e-12);
    }
}

TEST(Head, RejectsWrongFeatureWidth) {
  Rng rng(5);
  TaskHead head = TaskHead::make(4, 2, 1, rng);
  Tape tape;
  EXPECT_THROW(forward_head(tape, head, tape.constant(Tensor(Shape{2, 3}))), DimensionError);
}

TEST(Binding, FrozenParametersGetNoGradient) {
  Rng rng(6);
  TaskHead head = TaskHead::make(2, 2, 1, rng);
  Parameter x{"x", Tensor::matrix({{1, 2}}), {}};
  Tape tape;
  Var out = forward_head(tape, head, tape.parameter(x), Binding::frozen);
  const Gradients g = tape.backward(sum(out));
  EXPECT_EQ(g.find(head.layer.weight), nullptr);
  EXPECT_NE(g.find(x), nullptr);
}

TEST(Optimizer, SgdOneStep) {
  Parameter p{"p", Tensor::vector({1.0}), {}};
  Gradients g;
  g.add(&p, Tensor::vector({2.0}));
  Optimizer opt(OptimizerSpec{OptimizerKind::sgd, 0.1});
  Parameter* ps[] = {&p};
  opt.step(ps, g);
  EXPECT_DOUBLE_EQ(p.value[0], 0.8);

  Gradients zero;
  zero.add(&p, Tensor::vector({0.0}));
  opt.step(ps, zero);
  EXPECT_DOUBLE_EQ(p.value[0], 0.8);
}

TEST(Optimizer, AdamFirstStepMatchesHandFormula) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.5, p0 = 1.0;
  Parameter p{"p", Tensor::vector({p0}), {}};
  Gradients grads;
  grads.add(&p, Tensor::vector({g}));
  Optimizer opt(OptimizerSpec{OptimizerKind::adam, lr, b1, b2, eps});
  Parameter* ps[] = {&p};
  opt.step(ps, grads);
  const double m_hat = ((1 - b1) * g) / (1 - b1);
  const double v_hat = ((1 - b2) * g * g) / (1 - b2);
  EXPECT_NEAR(p.value[0], p0 - lr * m_hat / (std::sqrt(v_hat) + eps), 1e-15);
}

TEST(Optimizer, MissingGradientLeavesEverythingUntouched) {
  Parameter a{"a", Tensor::vector({1.0}), {}};
  Parameter b{"b", Tensor::vector({2.0}), {}};
  Gradients g;
  g.add(&a, Tensor::vector({1.0}));
  Optimizer opt(OptimizerSpec{});
  Parameter* ps[] = {&a, &b};
  EXPECT_THROW(opt.step(ps, g), AutodiffError);
  EXPECT_EQ(a.value[0], 1.0);
}

TEST(Optimizer, ValidatesSpec) {
  EXPECT_THROW(validate(OptimizerSpec{OptimizerKind::sgd, -1.0}), ConfigError);
  EXPECT_THROW(validate(OptimizerSpec{OptimizerKind::adam, 0.1, 1.0}), ConfigError);
  EXPECT_NO_THROW(validate(OptimizerSpec{}));
}
