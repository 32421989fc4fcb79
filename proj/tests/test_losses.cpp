#include <gtest/gtest.h>

#include <cmath>

#include "carl/errors.hpp"
#include "carl/losses.hpp"
#include "support.hpp"

using namespace carl;
using carl::testing::classification_samples;
using carl::testing::random_tensor;
using carl::testing::regression_samples;

namespace {

double value_of(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).value().item();
}

}  // namespace

TEST(CrossEntropy, UniformLogits) {
  const int labels[] = {2};
  const double v = value_of([&](Tape& t) { return cross_entropy(t.constant(Tensor(Shape{1, 4}, 0.7)), labels); });
  EXPECT_NEAR(v, std::log(4.0), 1e-12);
}

TEST(CrossEntropy, SaturatedLogitIsNearZero) {
  const int labels[] = {1};
  const double v =
      value_of([&](Tape& t) { return cross_entropy(t.constant(Tensor::matrix({{0, 1e3, 0}})), labels); });
  EXPECT_LT(v, 1e-3);
  EXPECT_GE(v, 0.0);
}

TEST(CrossEntropy, MatchesLogSumExpOracle) {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor z = random_tensor({3, 5}, rng, -4.0, 4.0);
    const int labels[] = {0, 3, 4};
    const double v = value_of([&](Tape& t) { return cross_entropy(t.constant(z), labels); });
    double oracle = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += std::exp(z.at(r, c));
      oracle += std::log(s) - z.at(r, static_cast<std::size_t>(labels[r]));
    }
    EXPECT_NEAR(v, oracle / 3.0, 1e-10);
  }
}

TEST(CrossEntropy, StableForHugeLogits) {
  const int labels[] = {0};
  const double v =
      value_of([&](Tape& t) { return cross_entropy(t.constant(Tensor::matrix({{1000.0, 999.0}})), labels); });
  EXPECT_NEAR(v, std::log(1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Mse, HandValues) {
  auto f = [](Tensor p, Tensor y) { return value_of([&](Tape& t) { return mse(t.constant(p), t.constant(y)); }); };
  EXPECT_EQ(f(Tensor::vector({1, 2}), Tensor::vector({1, 2})), 0.0);
  EXPECT_DOUBLE_EQ(f(Tensor::vector({1, 2}), Tensor::vector({0, 0})), 2.5);
  EXPECT_DOUBLE_EQ(f(Tensor::vector({2, 4}), Tensor::vector({0, 0})), 4 * 2.5);
}

TEST(L1, HandValues) {
  auto f = [](Tensor p, Tensor y) { return value_of([&](Tape& t) { return l1(t.constant(p), t.constant(y)); }); };
  EXPECT_EQ(f(Tensor::vector({1, 2}), Tensor::vector({1, 2})), 0.0);
  EXPECT_DOUBLE_EQ(f(Tensor::vector({1, 2}), Tensor::vector({0, 0})), 1.5);
  EXPECT_DOUBLE_EQ(f(Tensor::vector({-1, -2}), Tensor::vector({0, 0})), 1.5);
}

TEST(Losses, ShapeMismatchRaises) {
  Tape tape;
  EXPECT_THROW(mse(tape.constant(Tensor::vector({1, 2})), tape.constant(Tensor::vector({1}))), DimensionError);
}

class TaskLossTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(21);
    enc = std::make_unique<Encoder>(Encoder::mlp(EncoderSpec{4, {6}, {5}, Activation::relu, Activation::tanh}, rng));
    head = TaskHead::make(5, 3, 1, rng);
    x = random_tensor({6, 4}, rng);
    y = random_tensor({6, 3}, rng);
  }
  double loss(const Samples& s, LossKind kind) {
    Tape tape;
    return task_loss(tape, *enc, head, s, kind).value().item();
  }
  Tensor predictions(const Tensor& inputs) {
    Tape tape;
    return forward_head(tape, head, forward_encoder(tape, *enc, tape.constant(inputs))).value();
  }

  std::unique_ptr<Encoder> enc;
  TaskHead head;
  Tensor x, y;
};

TEST_F(TaskLossTest, EqualsMeanOfPerSampleLosses) {
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  for (LossKind kind : {LossKind::cross_entropy, LossKind::mse, LossKind::l1}) {
    const Samples s = kind == LossKind::cross_entropy ? classification_samples(x, labels) : regression_samples(x, y);
    const auto per = per_sample_losses(predictions(x), s, kind);
    double mean = 0.0;
    for (double v : per) mean += v;
    mean /= static_cast<double>(per.size());
    EXPECT_NEAR(loss(s, kind), mean, 1e-12) << to_string(kind);

    const std::size_t one[] = {3};
    const Samples single = s.select(one);
    EXPECT_NEAR(loss(single, kind), per[3], 1e-12);
  }
}

TEST_F(TaskLossTest, DuplicatedRowsKeepTheMean) {
  const Samples s = regression_samples(x, y);
  const std::size_t twice[] = {0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5};
  EXPECT_NEAR(loss(s.select(twice), LossKind::mse), loss(s, LossKind::mse), 1e-12);
}

TEST_F(TaskLossTest, ReplayLossIsTheSameFunction) {
  const Samples s = regression_samples(x, y);
  Tape a, b;
  const double t = task_loss(a, *enc, head, s, LossKind::mse).value().item();
  const double r = replay_loss(b, *enc, head, s, LossKind::mse).value().item();
  EXPECT_EQ(t, r);
}

TEST_F(TaskLossTest, ReplayLossOnEmptyBatchRaises) {
  Tape tape;
  EXPECT_THROW(replay_loss(tape, *enc, head, Samples{}, LossKind::mse), EmptyBufferError);
}

TEST_F(TaskLossTest, ReplayHeadIsFrozenByDefault) {
  const Samples s = regression_samples(x, y);
  Tape tape;
  const Gradients g = tape.backward(replay_loss(tape, *enc, head, s, LossKind::mse));
  EXPECT_EQ(g.find(head.layer.weight), nullptr);
  EXPECT_NE(g.find(enc->layers().front().weight), nullptr);
}

TEST_F(TaskLossTest, LossesAreNonnegative) {
  const Samples s = classification_samples(x, {0, 1, 2, 0, 1, 2});
  for (double v : per_sample_losses(predictions(x), s, LossKind::cross_entropy)) EXPECT_GE(v, 0.0);
}
