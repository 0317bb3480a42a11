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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "gridlab/a3c.hpp"
#include "support/oracles.hpp"

namespace gridlab {
namespace {

RolloutSegment segment(std::vector<double> rewards, std::vector<double> values, bool done,
                       double bootstrap) {
  RolloutSegment s;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    RolloutFrame f;
    f.reward = rewards[i];
    f.value = values[i];
    f.done = done && i + 1 == rewards.size();
    s.frames.push_back(f);
  }
  s.bootstrap = bootstrap;
  return s;
}

TEST(ComputeReturns, UndiscountedTerminal) {
  auto ra = compute_returns(segment({0, 0, 1}, {0, 0, 0}, true, 5.0), 1.0);
  for (const auto& x : ra) EXPECT_DOUBLE_EQ(x.ret, 1.0);
}

TEST(ComputeReturns, Bootstrapped) {
  auto ra = compute_returns(segment({0, 1}, {0.5, 0.25}, false, 2.0), 0.99);
  EXPECT_NEAR(ra[0].ret, 2.9502, 1e-12);
  EXPECT_NEAR(ra[1].ret, 2.98, 1e-12);
  EXPECT_NEAR(ra[0].advantage, 2.9502 - 0.5, 1e-12);
  EXPECT_NEAR(ra[1].advantage, 2.98 - 0.25, 1e-12);
}

TEST(ComputeReturns, ZeroRewardsDone) {
  auto ra = compute_returns(segment({0, 0, 0}, {0.3, -0.2, 1.0}, true, 7.0), 0.9);
  EXPECT_DOUBLE_EQ(ra[0].advantage, -0.3);
  EXPECT_DOUBLE_EQ(ra[1].advantage, 0.2);
  EXPECT_DOUBLE_EQ(ra[2].advantage, -1.0);
  for (const auto& x : ra) EXPECT_DOUBLE_EQ(x.ret, 0.0);
}

// A rollout of the given network on a real level.
RolloutSegment rollout(const PolicyValueNet<double>& net, std::uint64_t seed, int len = 15) {
  auto level = std::make_shared<const LevelConfig>(generate_level(MazeVariant::kBasic, seed, 0.0));
  auto st = reset(level);
  Rng rng(seed);
  RolloutSegment seg;
  ForwardCache<double> cache;
  for (int i = 0; i < len && !st.done; ++i) {
    RolloutFrame f;
    f.observation = observe(st).data;
    net.forward(f.observation, cache);
    f.value = cache.value;
    f.action = sample_action<double>(cache.logits, rng);
    auto out = step(st, f.action);
    f.reward = std::clamp(out.reward, -2.0, 2.0);
    f.done = out.done;
    seg.frames.push_back(std::move(f));
  }
  seg.bootstrap = 0.37;
  return seg;
}

TEST(Loss, NoAdvantageNoEntropyMeansNoPolicyGradient) {
  std::array<double, kNumActions> logits{0.1, -0.3, 0.7, 0.0, 0.2}, d_logits;
  double d_value = 0;
  LossStats stats;
  frame_loss_grads<double>(logits, 0.5, Action::kLeft, 0.5, 0.0, {0.0, 0.5}, d_logits,
                                   d_value, stats);
  for (double d : d_logits) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(d_value, 0.0);
}

TEST(Loss, EntropyTermIsLinearInCoefficient) {
  const auto& arch = arch_pool(Family::kConvNet)[0];
  PolicyValueNet<double> net(arch, 9, init_params(arch, 9, 21).cast<double>());
  auto seg = rollout(net, 3);
  auto g0 = loss_and_grads(net, seg, 0.99, {0.0, 0.5}).first;
  auto g1 = loss_and_grads(net, seg, 0.99, {0.02, 0.5}).first;
  auto g2 = loss_and_grads(net, seg, 0.99, {0.04, 0.5}).first;
  for (std::size_t t = 0; t < g0.tensors.size(); ++t)
    for (std::size_t i = 0; i < g0.tensors[t].size(); ++i) {
      const double a = g1.tensors[t].data[i] - g0.tensors[t].data[i];
      const double b = g2.tensors[t].data[i] - g0.tensors[t].data[i];
      ASSERT_NEAR(b, 2 * a, 1e-10 * (1 + std::abs(b)));
    }
}

// Finite differences of the scalar loss with returns and advantages frozen at
// the base parameters (the advantage is a constant in the policy term).
TEST(Loss, GradientMatchesFiniteDifferences) {
  for (auto f : {Family::kConvNet, Family::kMlp}) {
    const auto& arch = arch_pool(f)[0];
    auto p = init_params(arch, 9, 31).cast<double>();
    Rng rng(5);
    for (std::size_t i = 1; i < p.tensors.size(); i += 2)
      for (double& b : p.tensors[i].data) b = rng.uniform(-0.05, 0.05);
    PolicyValueNet<double> net(arch, 9, p);
    auto seg = rollout(net, 8);
    const LossConfig cfg{0.01, 0.5};
    const auto ra = compute_returns(seg, 0.99);
    auto [grads, stats] = loss_and_grads(net, seg, 0.99, cfg);

    auto loss_at = [&](const Params<double>& q, std::vector<bool>* pattern) {
      PolicyValueNet<double> n2(arch, 9, q);
      ForwardCache<double> c;
      double total = 0;
      if (pattern) pattern->clear();
      for (std::size_t i = 0; i < seg.frames.size(); ++i) {
        n2.forward(seg.frames[i].observation, c);
        auto [lp, h] = log_prob_entropy<double>(c.logits, seg.frames[i].action);
        const double err = ra[i].ret - c.value;
        total += -lp * ra[i].advantage + cfg.value_coef * err * err - cfg.entropy_coef * h;
        if (pattern) {
          auto pat = testing::relu_pattern(c);
          pattern->insert(pattern->end(), pat.begin(), pat.end());
        }
      }
      return total;
    };
    std::vector<bool> base_pat, pat_p, pat_m;
    loss_at(p, &base_pat);
    EXPECT_NEAR(loss_at(p, nullptr), stats.total, 1e-9 * (1 + std::abs(stats.total)));

    const double h = 1e-4;
    int checked = 0;
    double worst = 0;
    for (int attempt = 0; checked < 100 && attempt < 1000; ++attempt) {
      const std::size_t t = std::size_t(attempt) % p.tensors.size();
      const std::size_t i = rng.below(p.tensors[t].size());
      auto q = p;
      q.tensors[t].data[i] += h;
      const double lp = loss_at(q, &pat_p);
      q.tensors[t].data[i] -= 2 * h;
      const double lm = loss_at(q, &pat_m);
      if (pat_p != base_pat || pat_m != base_pat) continue;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, testing::relative_error(fd, grads.tensors[t].data[i]));
      ++checked;
    }
    EXPECT_GE(checked, 100);
    EXPECT_LT(worst, 1e-4) << arch.name();
  }
}

TEST(Loss, NonFiniteInputsAreReported) {
  const auto& arch = arch_pool(Family::kMlp)[0];
  auto p = init_params(arch, 9, 1).cast<double>();
  p.tensors.back().data[0] = NAN;  // value-head bias
  PolicyValueNet<double> net(arch, 9, p);
  RolloutSegment seg;
  RolloutFrame f;
  f.observation.assign(net.input_size(), 1.0f);
  seg.frames.push_back(f);
  EXPECT_THROW(loss_and_grads(net, seg, 0.99, {}), Error);
}

TEST(ClipGlobalNorm, ScalesDownOnly) {
  Params<float> g;
  g.tensors.push_back({"a", {2}, {30.0f, 40.0f}});
  EXPECT_NEAR(clip_global_norm(g, 100.0), 50.0, 1e-9);
  EXPECT_EQ(g.tensors[0].data[0], 30.0f);
  EXPECT_NEAR(clip_global_norm(g, 5.0), 50.0, 1e-9);
  EXPECT_NEAR(g.tensors[0].data[0], 3.0f, 1e-6);
  EXPECT_NEAR(g.tensors[0].data[1], 4.0f, 1e-6);
}

TEST(Smoothing, EqualsMovingAverageDefinition) {
  Rng rng(17);
  std::vector<double> xs(1000);
  for (auto& x : xs) x = rng.uniform(-1, 2.1);
  for (std::size_t w : {1u, 7u, 200u, 5000u}) {
    auto sm = smooth(xs, w);
    // Running sum with a queue of the last w values.
    double s = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      s += xs[i];
      if (i >= w) s -= xs[i - w];
      const double n = double(std::min(i + 1, w));
      EXPECT_NEAR(sm[i], s / n, 1e-9);
    }
  }
  std::vector<CurvePoint> pts;
  for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back({std::int64_t(i), xs[i]});
  EXPECT_NEAR(LearningCurve::tail_mean(pts), smooth(xs).back(), 1e-12);
}

TEST(ParamStore, CountsWritesAndRejects) {
  const auto& arch = arch_pool(Family::kConvNet)[0];
  ParamStore store(init_params(arch, 9, 1), {});
  auto g = store.snapshot().zeros_like();
  g.tensors[0].data[0] = 1.0f;
  EXPECT_TRUE(store.apply(g, 1e-3).applied);
  g.tensors[0].data[0] = NAN;
  EXPECT_FALSE(store.apply(g, 1e-3).applied);
  EXPECT_EQ(store.writes(), 1u);
  EXPECT_EQ(store.rejected(), 1u);
}

TrainConfig small_config() {
  TrainConfig c;
  c.n_train_levels = 3;
  c.n_test_levels = 5;
  c.max_steps = 3000;
  c.workers = 1;
  c.deterministic = true;
  c.test_interval_steps = 200;
  c.run_seed = 11;
  c.pool_seed = 12;
  return c;
}

TEST(Train, ZeroStepsReturnsInitialParams) {
  auto c = small_config();
  c.max_steps = 0;
  auto res = train(c);
  EXPECT_EQ(res.params, init_params(c.arch, 9, derive_seed(c.run_seed, stream_tag::kInit)));
  EXPECT_TRUE(res.curve.train.empty());
  EXPECT_TRUE(res.curve.test.empty());
  EXPECT_EQ(res.store_writes, 0u);
}

TEST(Train, DeterministicModeIsBitReproducible) {
  auto c = small_config();
  auto a = train(c), b = train(c);
  ASSERT_FALSE(a.curve.train.empty());
  ASSERT_FALSE(a.curve.test.empty());
  ASSERT_EQ(a.curve.train.size(), b.curve.train.size());
  ASSERT_EQ(a.curve.test.size(), b.curve.test.size());
  for (std::size_t i = 0; i < a.curve.train.size(); ++i) {
    EXPECT_EQ(a.curve.train[i].step, b.curve.train[i].step);
    EXPECT_EQ(a.curve.train[i].reward, b.curve.train[i].reward);
  }
  for (std::size_t i = 0; i < a.curve.test.size(); ++i)
    EXPECT_EQ(a.curve.test[i].reward, b.curve.test[i].reward);
  EXPECT_EQ(a.params, b.params);
  EXPECT_GE(a.steps, c.max_steps);
}

TEST(Train, TestWorkerNeverWrites) {
  auto c = small_config();
  c.deterministic = false;
  c.workers = 2;
  c.max_steps = 6000;
  c.test_interval_steps = 100;
  auto res = train(c);
  EXPECT_FALSE(res.curve.test.empty());
  EXPECT_EQ(res.store_writes, res.updates_applied);
  EXPECT_GT(res.store_writes, 0u);
}

TEST(Train, CheckpointResume) {
  const auto dir = std::filesystem::temp_directory_path() / "gridlab_resume_test";
  std::filesystem::remove_all(dir);
  auto c = small_config();
  c.max_steps = 1500;
  c.checkpoint_dir = dir;
  auto first = train(c);
  ASSERT_FALSE(first.checkpoints.empty());
  auto c2 = small_config();
  c2.resume_from = first.checkpoints.back();
  auto second = train(c2);
  EXPECT_GE(second.steps, c2.max_steps);
  EXPECT_NE(second.params, first.params);
  std::filesystem::remove_all(dir);
}

TEST(Train, InvalidConfigListsEveryViolation) {
  auto c = small_config();
  c.gamma = 2;
  c.learning_rate = -1;
  c.workers = 3;  // with deterministic
  try {
    train(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 3u);
  }
}

TEST(HyperParams, DeterministicAndFamilyRestricted) {
  auto a = sample_hyperparams(4, 99, Family::kMlp);
  auto b = sample_hyperparams(4, 99, Family::kMlp);
  EXPECT_EQ(a.arch.name(), b.arch.name());
  EXPECT_EQ(a.learning_rate, b.learning_rate);
  EXPECT_EQ(a.entropy_coef, b.entropy_coef);
  std::set<std::string> mlp;
  for (const auto& x : arch_pool(Family::kMlp)) mlp.insert(x.name());
  std::set<std::string> seen;
  for (std::uint64_t r = 0; r < 500; ++r) {
    auto h = sample_hyperparams(r, 1, Family::kMlp);
    EXPECT_TRUE(mlp.contains(h.arch.name()));
    seen.insert(h.arch.name());
  }
  EXPECT_EQ(seen, mlp);
}

// Kolmogorov-Smirnov test of log10(lr) against the uniform distribution on
// [-5, log10(0.05)], and of log10(entropy) on [-4, log10(0.05)].
TEST(HyperParams, LogUniformKolmogorovSmirnov) {
  const int n = 100000;
  std::vector<double> lr(n), ent(n);
  for (int i = 0; i < n; ++i) {
    auto h = sample_hyperparams(std::uint64_t(i), 2024, Family::kConvNet);
    lr[i] = std::log10(h.learning_rate);
    ent[i] = std::log10(h.entropy_coef);
  }
  auto ks = [&](std::vector<double> xs, double lo, double hi) {
    std::sort(xs.begin(), xs.end());
    double d = 0;
    for (int i = 0; i < n; ++i) {
      const double cdf = (xs[i] - lo) / (hi - lo);
      EXPECT_GE(cdf, 0.0);
      EXPECT_LE(cdf, 1.0);
      d = std::max({d, cdf - double(i) / n, double(i + 1) / n - cdf});
    }
    return d;
  };
  const double crit = 1.63 / std::sqrt(double(n));  // alpha = 0.01
  EXPECT_LT(ks(lr, -5.0, std::log10(0.05)), crit);
  EXPECT_LT(ks(ent, -4.0, std::log10(0.05)), crit);
}

}  // namespace
}  // namespace gridlab
