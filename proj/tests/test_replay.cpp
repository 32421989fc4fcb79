#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "carl/errors.hpp"
#include "carl/replay.hpp"
#include "support.hpp"

using namespace carl;
using carl::testing::classification_samples;
using carl::testing::identity_matrix;
using carl::testing::linear_encoder;
using carl::testing::random_tensor;

namespace {

Samples indexed_samples(std::size_t n, std::size_t d = 2) {
  Tensor x(Shape{n, d});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) x.at(i, k) = static_cast<double>(i) + 0.1 * static_cast<double>(k);
    labels[i] = static_cast<int>(i % 3);
  }
  return classification_samples(x, labels);
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(FillUniform, DistinctAndInRange) {
  Rng rng(1);
  const Selection s = fill_uniform(100, 10, rng);
  ASSERT_EQ(s.indices.size(), 10u);
  EXPECT_EQ(std::set<std::size_t>(s.indices.begin(), s.indices.end()).size(), 10u);
  for (auto i : s.indices) EXPECT_LT(i, 100u);
  EXPECT_TRUE(s.weights.empty());
  EXPECT_EQ(sorted(fill_uniform(4, 10, rng).indices), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_THROW(fill_uniform(0, 3, rng), ValueError);
}

TEST(FillUniform, InclusionFrequencyIsMOverN) {
  Rng rng(2);
  const std::size_t n = 100, m = 10, trials = 20000;
  std::vector<std::size_t> hits(n, 0);
  for (std::size_t t = 0; t < trials; ++t)
    for (auto i : fill_uniform(n, m, rng).indices) ++hits[i];
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(static_cast<double>(hits[i]) / trials, 0.1, 0.01) << i;
}

TEST(Reservoir, InclusionFrequencyIsMOverN) {
  const std::size_t n = 50, m = 5, trials = 20000;
  const Samples data = indexed_samples(n);
  std::vector<std::size_t> hits(n, 0);
  ReplayBuffer buffer(m, 3);
  for (std::size_t t = 0; t < trials; ++t) {
    StrategyState state(FillStrategy::reservoir);
    state.begin_task(1, n);
    buffer.mutable_items(1).clear();
    for (std::size_t i = 0; i < n; ++i) buffer.reservoir_insert(state, 1, make_item(data, i, 1));
    ASSERT_EQ(buffer.items(1).size(), m);
    ASSERT_EQ(state.seen(1), n);
    for (const auto& it : buffer.items(1)) ++hits[it.source_index];
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(static_cast<double>(hits[i]) / trials, 0.1, 0.01) << i;
}

TEST(Reservoir, ShortStreamKeepsEverything) {
  const Samples data = indexed_samples(3);
  ReplayBuffer buffer(5, 4);
  StrategyState state(FillStrategy::reservoir);
  state.begin_task(2, 3);
  for (std::size_t i = 0; i < 3; ++i) buffer.reservoir_insert(state, 2, make_item(data, i, 2));
  ASSERT_EQ(buffer.items(2).size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(buffer.items(2)[i].source_index, i);
}

TEST(FillRanked, HardAndEasy) {
  const std::vector<double> losses{0.1, 0.9, 0.5};
  EXPECT_EQ(sorted(fill_hard(losses, 2).indices), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(sorted(fill_easy(losses, 2).indices), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(fill_hard(losses, 5).indices.size(), 3u);
}

TEST(FillRanked, TiesGoToLowerIndex) {
  const std::vector<double> losses{1.0, 2.0, 2.0, 1.0};
  EXPECT_EQ(fill_hard(losses, 1).indices, (std::vector<std::size_t>{1}));
  EXPECT_EQ(fill_easy(losses, 1).indices, (std::vector<std::size_t>{0}));
  EXPECT_EQ(fill_easy(losses, 3).indices, (std::vector<std::size_t>{0, 3, 1}));
}

TEST(FillRanked, RejectsUnobservedLosses) {
  const std::vector<double> losses{1.0, std::nan("")};
  EXPECT_THROW(fill_hard(losses, 1), ValueError);
}

TEST(Welford, MatchesTwoPass) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-3, 7);
  std::vector<double> xs(257);
  WelfordStats w;
  for (double& x : xs) {
    x = u(rng);
    w.push(x);
  }
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(w.mean, mean, 1e-12);
  EXPECT_NEAR(w.variance(), ss / xs.size(), 1e-10);

  WelfordStats two;
  two.push(0);
  two.push(2);
  EXPECT_DOUBLE_EQ(two.variance(), 1.0);
}

TEST(FillHighVariance, PicksLargestVariance) {
  StrategyState state(FillStrategy::high_variance);
  state.begin_task(1, 3);
  const double epochs[][3] = {{1.0, 0.0, 5.0}, {1.0, 2.0, 5.5}};
  for (int e = 0; e < 2; ++e)
    for (std::size_t i = 0; i < 3; ++i) state.record_loss(i, epochs[e][i], e == 1);
  Rng rng(0);
  EXPECT_EQ(select_for_buffer(state, 3, 1, rng).indices, (std::vector<std::size_t>{1}));
  EXPECT_EQ(state.final_losses(), (std::vector<double>{1.0, 2.0, 5.5}));

  StrategyState once(FillStrategy::high_variance);
  once.begin_task(1, 2);
  once.record_loss(0, 1.0, true);
  once.record_loss(1, 1.0, true);
  EXPECT_THROW(select_for_buffer(once, 2, 1, rng), ValueError);
}

TEST(FillLossEq, RampGivesTwoPerBin) {
  std::vector<double> ramp(100);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  const Selection s = fill_loss_equalized(ramp, 20, false);
  ASSERT_EQ(s.indices.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(s.indices.begin(), s.indices.end()).size(), 20u);
  const LossHistogram hist = LossHistogram::build(ramp, 10);
  std::vector<double> picked;
  for (auto i : s.indices) picked.push_back(ramp[i]);
  for (std::size_t c : hist.count(picked)) EXPECT_EQ(c, 2u);
}

TEST(FillLossEq, FlattensSkewedSource) {
  Rng rng(6);
  // Exponential losses concentrate in the low bins.
  std::exponential_distribution<double> e(2.0);
  std::vector<double> losses(1000);
  for (double& v : losses) v = e(rng);
  const Selection s = fill_loss_equalized(losses, 50, false);
  const LossHistogram hist = LossHistogram::build(losses, 10);
  std::vector<double> picked;
  for (auto i : s.indices) picked.push_back(losses[i]);
  auto spread = [](const std::vector<std::size_t>& counts) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t c : counts) {
      if (c == 0) continue;
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    return static_cast<double>(hi) / static_cast<double>(lo);
  };
  EXPECT_LT(spread(hist.count(picked)), spread(hist.counts) / 4);
  const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
  EXPECT_NE(std::find(s.indices.begin(), s.indices.end(), static_cast<std::size_t>(lo - losses.begin())), s.indices.end());
  EXPECT_NE(std::find(s.indices.begin(), s.indices.end(), static_cast<std::size_t>(hi - losses.begin())), s.indices.end());
}

TEST(FillLossEq, UniformSourceRatioBound) {
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<double> losses(1000);
  for (double& v : losses) v = u(rng);
  const Selection s = fill_loss_equalized(losses, 50, false);
  const LossHistogram hist = LossHistogram::build(losses, 10);
  std::vector<double> picked;
  for (auto i : s.indices) picked.push_back(losses[i]);
  const auto counts = hist.count(picked);
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  ASSERT_GT(*lo, 0u);
  EXPECT_LE(static_cast<double>(*hi) / static_cast<double>(*lo), 2.0);
}

TEST(FillLossEq, WeightsFollowSourceHistogram) {
  const std::vector<double> flat(40, 0.7);
  const Selection f = fill_loss_equalized(flat, 10, true);
  ASSERT_EQ(f.weights.size(), 10u);
  for (double w : f.weights) EXPECT_EQ(w, 1.0);

  // Bin 0 holds 9 samples, bin 9 holds 1.
  std::vector<double> skew(9, 0.0);
  skew.push_back(1.0);
  const Selection s = fill_loss_equalized(skew, 2, true, 10);
  ASSERT_EQ(s.indices.size(), 2u);
  EXPECT_EQ(s.indices[0], 0u);
  EXPECT_EQ(s.indices[1], 9u);
  EXPECT_DOUBLE_EQ(s.weights[0], 9.0 / 5.0);
  EXPECT_DOUBLE_EQ(s.weights[1], 1.0 / 5.0);
  EXPECT_TRUE(fill_loss_equalized(skew, 2, false).weights.empty());
}

TEST(Histogram, EdgesAndClamping) {
  const std::vector<double> v{0.0, 1.0, 2.0, 10.0};
  const LossHistogram h = LossHistogram::build(v, 5);
  EXPECT_EQ(h.edges.front(), 0.0);
  EXPECT_EQ(h.edges.back(), 10.0);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{2, 1, 0, 0, 1}));
  EXPECT_EQ(h.total(), 4u);
  EXPECT_EQ(h.bin_of(-5.0), 0u);
  EXPECT_EQ(h.bin_of(50.0), 4u);
  EXPECT_THROW(LossHistogram::build(std::vector<double>{}, 5), ValueError);
}

TEST(SampleReplay, WeightedFrequencies) {
  const Samples data = indexed_samples(2);
  ReplayBuffer buffer(2, 8);
  buffer.store(1, data, Selection{{0, 1}, {1.0, 3.0}});
  Rng rng(9);
  const auto draws = sample_replay_batch(buffer, 1, 50000, rng, true);
  const double ones = static_cast<double>(std::count_if(draws.begin(), draws.end(),
                                                        [](const ReplayItem& it) { return it.source_index == 1; }));
  EXPECT_NEAR(ones / 50000, 0.75, 0.02);
}

TEST(SampleReplay, UniformPassesChiSquare) {
  const std::size_t k = 8, draws_n = 16000;
  const Samples data = indexed_samples(k);
  ReplayBuffer buffer(k, 10);
  Selection all;
  all.indices.resize(k);
  std::iota(all.indices.begin(), all.indices.end(), std::size_t{0});
  buffer.store(1, data, all);
  for (bool weighted : {false, true}) {
    Rng rng(11);
    std::vector<double> counts(k, 0);
    for (const auto& it : sample_replay_batch(buffer, 1, draws_n, rng, weighted)) ++counts[it.source_index];
    const double expected = static_cast<double>(draws_n) / k;
    double chi2 = 0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 99.9th percentile of chi-square with 7 degrees of freedom.
    EXPECT_LT(chi2, 24.32) << weighted;
  }
  Rng rng(1);
  EXPECT_THROW(sample_replay_batch(buffer, 2, 3, rng, false), EmptyBufferError);
}

TEST(Buffer, StoreRespectsCapacityAndCopiesRows) {
  const Samples data = indexed_samples(30);
  ReplayBuffer buffer(4, 0);
  EXPECT_THROW(buffer.store(1, data, Selection{{0, 1, 2, 3, 4}, {}}), ValueError);
  buffer.store(1, data, Selection{{7, 3}, {}});
  buffer.store(2, data, Selection{{1}, {}});
  EXPECT_EQ(buffer.total_size(), 3u);
  EXPECT_EQ(buffer.tasks(), (std::vector<int>{1, 2}));
  const ReplayItem& it = buffer.items(1)[0];
  EXPECT_EQ(it.x, data.inputs.row(7));
  EXPECT_EQ(it.label, data.labels[7]);
  EXPECT_EQ(it.task_index, 1);
  EXPECT_EQ(buffer.items(3).size(), 0u);
  EXPECT_THROW(ReplayBuffer(0, 0), ConfigError);
}

TEST(Buffer, CapacityInvariantAcrossStrategies) {
  Rng rng(12);
  const std::size_t n = 60, m = 7;
  const Samples data = indexed_samples(n);
  for (FillStrategy strategy : {FillStrategy::uniform, FillStrategy::hard, FillStrategy::easy,
                                FillStrategy::high_variance, FillStrategy::loss_eq, FillStrategy::loss_eq_weighted}) {
    StrategyState state(strategy);
    ReplayBuffer buffer(m, 1);
    for (int task = 1; task <= 3; ++task) {
      state.begin_task(task, n);
      for (int e = 0; e < 2; ++e)
        for (std::size_t i = 0; i < n; ++i) state.record_loss(i, random_tensor({1}, rng, 0, 3)[0], e == 1);
      buffer.store(task, data, select_for_buffer(state, n, m, rng));
      for (int j = 1; j <= task; ++j) EXPECT_LE(buffer.items(j).size(), m) << to_string(strategy);
    }
    EXPECT_EQ(buffer.total_size(), 3 * m) << to_string(strategy);
  }
  StrategyState reservoir(FillStrategy::reservoir);
  EXPECT_THROW(select_for_buffer(reservoir, n, m, rng), StateError);
}

TEST(Buffer, SelectionIsDeterministicPerSeed) {
  Rng a(42), b(42);
  EXPECT_EQ(fill_uniform(500, 20, a).indices, fill_uniform(500, 20, b).indices);
}

TEST(AttachFeatures, IdentityAndZeroEncoders) {
  Rng rng(13);
  const Samples data = classification_samples(random_tensor({6, 3}, rng), {0, 1, 2, 0, 1, 2});
  ReplayBuffer buffer(6, 0);
  buffer.store(1, data, Selection{{0, 2, 5}, {}});
  buffer.store(2, data, Selection{{1, 4}, {}});

  Encoder id = linear_encoder(identity_matrix(3));
  attach_features(buffer, 1, id, CompressionKind::none);
  for (const auto& it : buffer.items(1)) EXPECT_EQ(*it.stored_feature, it.x);
  EXPECT_TRUE(buffer.features_attached(1));
  EXPECT_THROW(attach_features(buffer, 1, id, CompressionKind::none), StateError);

  Encoder zero = linear_encoder(Tensor(Shape{3, 4}));
  attach_features(buffer, 2, zero, CompressionKind::none);
  for (const auto& it : buffer.items(2)) EXPECT_EQ(*it.stored_feature, Tensor(Shape{4}));
  EXPECT_EQ(stored_features(buffer.items(2)).shape(), (Shape{2, 4}));

  buffer.store(2, data, Selection{{3}, {}});
  EXPECT_FALSE(buffer.features_attached(2));
  EXPECT_THROW(stored_features(buffer.items(2)), StateError);
}

TEST(AttachFeatures, MatchesPerItemRecompute) {
  Rng rng(14);
  Encoder enc = Encoder::mlp(EncoderSpec{4, {6}, {2, 2, 2}, Activation::relu, Activation::tanh}, rng);
  const Samples data = classification_samples(random_tensor({5, 4}, rng), {0, 0, 1, 1, 0});
  for (CompressionKind kind : {CompressionKind::none, CompressionKind::spatial, CompressionKind::channel,
                               CompressionKind::spatial_channel}) {
    ReplayBuffer buffer(5, 0);
    buffer.store(1, data, Selection{{4, 0, 3}, {}});
    attach_features(buffer, 1, enc, kind);
    for (const auto& it : buffer.items(1)) {
      Tape tape;
      const Tensor f = forward_encoder(tape, enc, tape.constant(it.x.reshaped({1, 4}))).value().row(0);
      const Tensor expect = compress(f, kind);
      ASSERT_EQ(it.stored_feature->size(), compressed_dim(Shape{2, 2, 2}, kind));
      for (std::size_t k = 0; k < expect.size(); ++k) EXPECT_NEAR((*it.stored_feature)[k], expect[k], 1e-12);
    }
  }
}

TEST(Buffer, ToSamplesRoundTrip) {
  const Samples data = indexed_samples(5);
  ReplayBuffer buffer(5, 0);
  buffer.store(1, data, Selection{{4, 1}, {}});
  const Samples back = to_samples(buffer.items(1));
  const std::size_t rows[] = {4, 1};
  EXPECT_EQ(back.inputs, data.select(rows).inputs);
  EXPECT_EQ(back.labels, data.select(rows).labels);
  EXPECT_NE(buffer_snapshot_json(buffer).find("\"source_index\":4"), std::string::npos);
}
