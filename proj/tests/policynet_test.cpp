// Copyright 2026 The Gridlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "gridlab/checkpoint.hpp"
#include "gridlab/policynet.hpp"
#include "support/oracles.hpp"

namespace gridlab {
namespace {

using testing::check_network_gradients;
using testing::naive_forward;
using testing::random_observation;

const ArchSpec& convnet(int i) { return arch_pool(Family::kConvNet)[std::size_t(i)]; }

TEST(ArchPool, PoolSizesAndNames) {
  EXPECT_EQ(arch_pool(Family::kConvNet).size(), 5u);
  EXPECT_EQ(arch_pool(Family::kBigConvNet).size(), 8u);
  EXPECT_EQ(arch_pool(Family::kMlp).size(), 6u);
  EXPECT_EQ(convnet(0).name(), "convnet:K3S1C11-K3S2C11");
  EXPECT_EQ(arch_pool(Family::kMlp)[0].name(), "mlp:D512-D128");
  for (auto f : {Family::kConvNet, Family::kBigConvNet, Family::kMlp})
    for (const auto& a : arch_pool(f)) {
      auto parsed = parse_arch(a.name());
      ASSERT_TRUE(parsed);
      EXPECT_EQ(parsed->name(), a.name());
    }
}

TEST(ArchPool, BigConvNetsAreLarger) {
  // The two smallest Big-ConvNets repeat the two smallest ConvNets, so the
  // comparison is on the largest and on the average network.
  auto count = [](const ArchSpec& a) { return PolicyValueNet<float>(a, 13).num_params(); };
  std::size_t conv_max = 0, big_max = 0;
  double conv_mean = 0, big_mean = 0;
  for (const auto& a : arch_pool(Family::kConvNet)) {
    conv_max = std::max(conv_max, count(a));
    conv_mean += double(count(a)) / 5;
  }
  for (const auto& a : arch_pool(Family::kBigConvNet)) {
    big_max = std::max(big_max, count(a));
    big_mean += double(count(a)) / 8;
  }
  EXPECT_GT(big_max, conv_max);
  EXPECT_GT(big_mean, conv_mean);
}

TEST(InitParams, DeterministicAndShaped) {
  const auto& arch = convnet(1);  // K3S1C64-K3S2C64
  auto a = init_params(arch, 13, 9);
  EXPECT_EQ(a, init_params(arch, 13, 9));
  EXPECT_NE(a, init_params(arch, 13, 10));
  // HWIO conv weights; 13 -> 11 (k3 s1) -> 5 (k3 s2); heads read 5*5*64.
  const std::vector<std::vector<int>> expected = {{3, 3, 7, 64}, {64},    {3, 3, 64, 64}, {64},
                                                  {1600, 5},     {5},     {1600, 1},      {1}};
  ASSERT_EQ(a.tensors.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(a.tensors[i].shape, expected[i]);
  for (std::size_t i = 1; i < a.tensors.size(); i += 2)
    for (float b : a.tensors[i].data) EXPECT_EQ(b, 0.0f);

  PolicyValueNet<float> net(arch, 13, a);
  ForwardCache<float> cache;
  Rng rng(1);
  net.forward(random_observation(13, rng), cache);
  EXPECT_EQ(cache.acts[1].size(), 11u * 11u * 64u);
  EXPECT_EQ(cache.acts[2].size(), 5u * 5u * 64u);
  EXPECT_THROW(init_params(arch, 10, 0), ContractViolation);
}

TEST(Forward, ZeroParamsGiveUniformPolicy) {
  for (auto f : {Family::kConvNet, Family::kMlp}) {
    PolicyValueNet<float> net(arch_pool(f)[0], 9);
    Rng rng(2);
    ForwardCache<float> cache;
    net.forward(random_observation(9, rng), cache);
    for (float l : cache.logits) EXPECT_EQ(l, 0.0f);
    EXPECT_EQ(cache.value, 0.0f);
    auto p = softmax<float>(cache.logits);
    for (float x : p) EXPECT_FLOAT_EQ(x, 0.2f);
    EXPECT_NEAR(log_prob_entropy<float>(cache.logits, Action::kUp).entropy, std::log(5.0), 1e-6);
  }
}

TEST(Forward, BatchMatchesSingle) {
  PolicyValueNet<float> net(convnet(0), 9, init_params(convnet(0), 9, 3));
  auto level = std::make_shared<const LevelConfig>(generate_level(MazeVariant::kBasic, 1, 0.0));
  auto st = reset(level);
  std::vector<Observation> batch;
  Rng rng(4);
  for (int i = 0; i < 15 && !st.done; ++i) {
    batch.push_back(observe(st));
    step(st, static_cast<Action>(rng.below(kNumActions)));
  }
  auto out = net.forward_batch(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto single = net.forward(batch[i]);
    EXPECT_EQ(single.logits, out[i].logits);
    EXPECT_EQ(single.value, out[i].value);
  }
}

TEST(Forward, MatchesNaiveLayerAlgebra) {
  for (auto f : {Family::kConvNet, Family::kBigConvNet, Family::kMlp})
    for (const auto& arch : arch_pool(f)) {
      if (PolicyValueNet<double>(arch, 9).num_params() > 3'000'000) continue;
      auto p = init_params(arch, 9, 11).cast<double>();
      // Bias the biases so the check exercises them too.
      Rng rng(12);
      for (std::size_t i = 1; i < p.tensors.size(); i += 2)
        for (double& b : p.tensors[i].data) b = rng.uniform(-0.1, 0.1);
      PolicyValueNet<double> net(arch, 9, p);
      auto obs = random_observation(9, rng);
      ForwardCache<double> cache;
      net.forward(obs, cache);
      auto ref = naive_forward(arch, 9, p, obs);
      for (int k = 0; k < kNumActions; ++k)
        EXPECT_NEAR(cache.logits[k], ref.logits[k], 1e-10 * (1 + std::abs(ref.logits[k])))
            << arch.name();
      EXPECT_NEAR(cache.value, ref.value, 1e-10 * (1 + std::abs(ref.value))) << arch.name();
    }
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  PolicyValueNet<float> net(convnet(0), 9, init_params(convnet(0), 9, 5));
  ForwardCache<float> cache;
  Rng rng(6);
  net.forward(random_observation(9, rng), cache);
  auto g = net.params().zeros_like();
  std::array<float, kNumActions> zero{};
  net.backward(cache, zero, 0.0f, g);
  EXPECT_EQ(g.squared_norm(), 0.0f);
}

TEST(Backward, Linear) {
  for (auto f : {Family::kConvNet, Family::kMlp}) {
    const auto& arch = arch_pool(f)[0];
    PolicyValueNet<double> net(arch, 9, init_params(arch, 9, 7).cast<double>());
    ForwardCache<double> cache;
    Rng rng(8);
    net.forward(random_observation(9, rng), cache);
    std::array<double, kNumActions> g{0.3, -0.2, 0.1, 0.5, -0.7}, g2;
    for (int k = 0; k < kNumActions; ++k) g2[k] = 2 * g[k];
    auto a = net.params().zeros_like(), b = a;
    net.backward(cache, g, 0.4, a);
    net.backward(cache, g2, 0.8, b);
    for (std::size_t t = 0; t < a.tensors.size(); ++t)
      for (std::size_t i = 0; i < a.tensors[t].size(); ++i)
        ASSERT_NEAR(b.tensors[t].data[i], 2 * a.tensors[t].data[i],
                    1e-12 * (1 + std::abs(b.tensors[t].data[i])));
  }
}

TEST(Backward, StaleCacheRejected) {
  PolicyValueNet<float> net(convnet(0), 9, init_params(convnet(0), 9, 5));
  ForwardCache<float> cache;
  Rng rng(6);
  net.forward(random_observation(9, rng), cache);
  net.mutable_params();
  auto g = net.params().zeros_like();
  std::array<float, kNumActions> d{};
  EXPECT_THROW(net.backward(cache, d, 1.0f, g), ContractViolation);
}

// The full sweep over all pools is part of the acceptance binary; this keeps
// one small architecture per family in the unit suite.
TEST(Backward, FiniteDifferencesSmallArchitectures) {
  for (auto f : {Family::kConvNet, Family::kMlp}) {
    const auto& arch = arch_pool(f)[0];
    auto res = check_network_gradients(arch, 9, 13, 60);
    EXPECT_EQ(res.checked, 60);
    EXPECT_LT(res.max_rel_error, 1e-4) << arch.name();
  }
}

TEST(Sampling, UniformLogitsGiveUniformActions) {
  std::array<float, kNumActions> logits{};
  Rng rng(99);
  const int n = 100000;
  std::array<int, kNumActions> counts{};
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample_action<float>(logits, rng))];
  const double sigma = std::sqrt(0.2 * 0.8 / n);
  for (int c : counts) EXPECT_NEAR(double(c) / n, 0.2, 3 * sigma);
}

TEST(Sampling, DominantLogit) {
  std::array<float, kNumActions> logits{20, 0, 0, 0, 0};
  EXPECT_NEAR(log_prob_entropy<float>(logits, Action::kUp).entropy, 0.0, 1e-6);
  Rng rng(1);
  int up = 0;
  for (int i = 0; i < 10000; ++i) up += sample_action<float>(logits, rng) == Action::kUp;
  EXPECT_GT(up, 9990);
  std::array<float, kNumActions> bad{0, NAN, 0, 0, 0};
  EXPECT_THROW(sample_action<float>(bad, rng), ContractViolation);
}

TEST(Sampling, SoftmaxAndEntropyBounds) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::array<double, kNumActions> logits;
    for (auto& l : logits) l = rng.uniform(-30, 30);
    auto p = softmax<double>(logits);
    double s = 0;
    for (double x : p) s += x;
    EXPECT_NEAR(s, 1.0, 1e-6);
    const double h = log_prob_entropy<double>(logits, Action::kStay).entropy;
    EXPECT_GE(h, -1e-12);
    EXPECT_LE(h, std::log(5.0) + 1e-12);
  }
}

TEST(RmsProp, DecayedAccumulatorFlushesToZero) {
  std::vector<float> theta{1.0f}, grad{1e-3f}, acc{0.0f};
  rmsprop_apply(theta, grad, acc, {0.1, 0.99, 1e-8});
  grad[0] = 0.0f;
  for (int i = 0; i < 20000; ++i) {
    rmsprop_apply(theta, grad, acc, {0.1, 0.99, 1e-8});
    ASSERT_TRUE(acc[0] == 0.0f || std::isnormal(acc[0])) << i;
  }
  EXPECT_EQ(acc[0], 0.0f);
}

TEST(RmsProp, ScalarHandComputation) {
  std::vector<float> theta{0.0f}, grad{1.0f}, acc{0.0f};
  rmsprop_apply(theta, grad, acc, {0.1, 0.99, 1e-8});
  EXPECT_NEAR(acc[0], 0.01f, 1e-7);
  EXPECT_NEAR(theta[0], -0.1 / (0.1 + 1e-8), 1e-6);
}

TEST(RmsProp, ZeroGradsDecayAccumulator) {
  std::vector<float> theta{1.5f}, grad{0.0f}, acc{0.5f};
  rmsprop_apply(theta, grad, acc, {0.1, 0.99, 1e-8});
  EXPECT_EQ(theta[0], 1.5f);
  EXPECT_FLOAT_EQ(acc[0], 0.99f * 0.5f);
}

TEST(RmsProp, RejectsNonFiniteAndIsDeterministic) {
  auto p = init_params(convnet(0), 9, 1);
  auto g = p.zeros_like();
  g.tensors[0].data[0] = 0.5f;
  auto p1 = p, p2 = p;
  auto o1 = OptState::for_params(p, {}), o2 = o1;
  EXPECT_TRUE(rmsprop_update(p1, g, o1).applied);
  EXPECT_TRUE(rmsprop_update(p2, g, o2).applied);
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(o1.accumulators, o2.accumulators);
  for (const auto& a : o1.accumulators)
    for (float x : a) EXPECT_GE(x, 0.0f);
  g.tensors[1].data[0] = INFINITY;
  auto before = p1;
  auto status = rmsprop_update(p1, g, o1);
  EXPECT_FALSE(status.applied);
  EXPECT_FALSE(status.reason.empty());
  EXPECT_EQ(p1, before);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "gridlab_ck_test";
  std::filesystem::remove_all(dir);
  Checkpoint ck;
  ck.arch = convnet(0);
  ck.grid = 9;
  ck.params = init_params(ck.arch, 9, 4);
  ck.accumulators = OptState::for_params(ck.params, {}).accumulators;
  ck.seed = 4;
  ck.step = 1234;
  ck.meta["note"] = "x";
  save_checkpoint(dir / "ck.json", ck);
  auto back = load_checkpoint(dir / "ck.json");
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.step, 1234);
  EXPECT_EQ(back.arch.name(), ck.arch.name());
  ASSERT_TRUE(back.accumulators);
  EXPECT_EQ(*back.accumulators, *ck.accumulators);
  // Truncated blob is detected.
  std::filesystem::resize_file(dir / "ck.bin", 10);
  EXPECT_THROW(load_checkpoint(dir / "ck.json"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace gridlab
