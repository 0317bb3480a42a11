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
#include <map>
#include <queue>
#include <set>

#include "gridlab/evaluation.hpp"
#include "gridlab/gridworld.hpp"
#include "gridlab/level_io.hpp"

namespace gridlab {
namespace {

constexpr MazeVariant kVariants[] = {MazeVariant::kBasic, MazeVariant::kBlocks,
                                     MazeVariant::kTunnel};

LevelPtr share(LevelConfig l) { return std::make_shared<const LevelConfig>(std::move(l)); }

// Flood fill written independently of the library's BFS helpers.
std::set<std::pair<int, int>> reachable(const LevelConfig& l, Cell from,
                                        const std::set<std::pair<int, int>>& blocked) {
  std::set<std::pair<int, int>> seen{{from.row, from.col}};
  std::queue<Cell> q;
  q.push(from);
  while (!q.empty()) {
    Cell c = q.front();
    q.pop();
    const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      Cell n{c.row + dr[k], c.col + dc[k]};
      if (l.layout.wall(n) || blocked.contains({n.row, n.col}) || seen.contains({n.row, n.col}))
        continue;
      seen.insert({n.row, n.col});
      q.push(n);
    }
  }
  return seen;
}

TEST(Layout, VariantShapes) {
  EXPECT_EQ(grid_size(MazeVariant::kBasic), 9);
  EXPECT_EQ(grid_size(MazeVariant::kBlocks), 13);
  EXPECT_EQ(grid_size(MazeVariant::kTunnel), 13);
  for (std::uint64_t id = 0; id < 200; ++id) {
    auto basic = generate_level(MazeVariant::kBasic, id, 0.0);
    int internal = 0;
    for (int r = 1; r < 8; ++r)
      for (int c = 1; c < 8; ++c) internal += basic.layout.wall({r, c});
    EXPECT_EQ(internal, 0);

    auto blocks = generate_level(MazeVariant::kBlocks, id, 0.0);
    internal = 0;
    for (int r = 1; r < 12; ++r)
      for (int c = 1; c < 12; ++c) internal += blocks.layout.wall({r, c});
    EXPECT_EQ(internal, kBlocksObstacles);

    auto tunnel = generate_level(MazeVariant::kTunnel, id, 0.0);
    for (int r = 1; r < 12; ++r)
      for (int c = 1; c < 12; ++c) {
        if (!tunnel.layout.wall({r, c})) continue;
        int wall_neighbors = 0;
        for (Action a : {Action::kUp, Action::kDown, Action::kLeft, Action::kRight})
          wall_neighbors += tunnel.layout.wall(neighbor({r, c}, a));
        EXPECT_GT(wall_neighbors, 0) << "isolated wall cell in tunnel level " << id;
      }
    for (const auto* l : {&basic, &blocks, &tunnel})
      for (int i = 0; i < l->size(); ++i) {
        EXPECT_TRUE(l->layout.wall({0, i}));
        EXPECT_TRUE(l->layout.wall({i, 0}));
        EXPECT_TRUE(l->layout.wall({l->size() - 1, i}));
        EXPECT_TRUE(l->layout.wall({i, l->size() - 1}));
      }
  }
}

TEST(GenerateLevel, BasicSevenHasBaseRewards) {
  auto l = generate_level(MazeVariant::kBasic, 7, 0.0);
  const std::array<double, 5> expected{0.1, 1.0, 1.0, -1.0, -1.0};
  EXPECT_EQ(l.object_rewards, expected);
}

TEST(GenerateLevel, Pure) {
  for (auto v : kVariants)
    for (double p : {0.0, 0.5}) {
      EXPECT_EQ(generate_level(v, 7, p), generate_level(v, 7, p));
      EXPECT_EQ(level_to_json(generate_level(v, 7, p)).dump(),
                level_to_json(generate_level(v, 7, p)).dump());
    }
}

TEST(GenerateLevel, PlacementInvariants) {
  for (auto v : kVariants)
    for (double p : {0.0, 0.2, 0.5, 1.0})
      for (std::uint64_t id = 0; id < 150; ++id) {
        auto l = generate_level(v, id, p);
        std::set<std::pair<int, int>> cells{{l.default_spawn.row, l.default_spawn.col}};
        EXPECT_FALSE(l.layout.wall(l.default_spawn));
        for (Cell c : l.object_cells) {
          EXPECT_FALSE(l.layout.wall(c));
          cells.insert({c.row, c.col});
        }
        EXPECT_EQ(cells.size(), 6u) << "objects and spawn must be distinct";
        EXPECT_EQ(l.object_rewards[kTerminalObject], kTerminalReward);
        double pos = 0.0;
        for (int o = 1; o < kNumObjects; ++o) pos += std::max(0.0, l.object_rewards[o]);
        EXPECT_DOUBLE_EQ(pos, 2.0);

        std::set<std::pair<int, int>> negatives;
        for (int o = 1; o < kNumObjects; ++o)
          if (l.object_rewards[o] < 0) negatives.insert({l.object_cells[o].row, l.object_cells[o].col});
        auto seen = reachable(l, l.default_spawn, negatives);
        for (int o = 0; o < kNumObjects; ++o)
          if (o == 0 || l.object_rewards[o] > 0) {
            EXPECT_TRUE(seen.contains({l.object_cells[o].row, l.object_cells[o].col}))
                << to_string(v) << " id " << id << " object " << o;
          }
      }
}

TEST(RewardFlips, ZeroAndFull) {
  const std::array<double, 4> base{1, 1, -1, -1};
  for (std::uint64_t id = 0; id < 50; ++id) {
    EXPECT_EQ(apply_reward_flips(base, id, 0.0), base);
    EXPECT_EQ(apply_reward_flips(base, id, 1.0), (std::array<double, 4>{-1, -1, 1, 1}));
  }
}

TEST(RewardFlips, SingleSurvivorIsScaledToTwo) {
  // Pattern (+, -, -, -): object 2 flipped, nothing else. Rescaling by
  // 2 / 1 gives (2, -2, -2, -2).
  bool found = false;
  for (std::uint64_t id = 0; id < 5000 && !found; ++id) {
    auto r = apply_reward_flips({1, 1, -1, -1}, id, 0.5);
    if (r[0] > 0 && r[1] < 0 && r[2] < 0 && r[3] < 0) {
      EXPECT_EQ(r, (std::array<double, 4>{2, -2, -2, -2}));
      auto level = generate_level(MazeVariant::kBasic, id, 0.5);
      EXPECT_EQ(oracle_optimal_reward(level).reward, 2.1);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(RewardFlips, ScaledMagnitudes) {
  for (std::uint64_t id = 0; id < 3000; ++id) {
    auto r = apply_reward_flips({1, 1, -1, -1}, id, 0.4);
    int positives = 0;
    for (double x : r) positives += x > 0;
    ASSERT_GT(positives, 0);
    for (double x : r) EXPECT_DOUBLE_EQ(std::abs(x), 2.0 / positives);
  }
}

TEST(RewardFlips, NegationFrequencyMatchesConditionalBinomial) {
  // Object 1 (base +1) ends negative iff it was flipped, conditioned on the
  // mask not being all-negative (objects 1, 2 flipped and 3, 4 kept).
  const double p = 0.4;
  const double all_neg = p * p * (1 - p) * (1 - p);
  const double expected = (p - all_neg) / (1 - all_neg);
  const int n = 20000;
  int neg = 0;
  for (std::uint64_t id = 0; id < std::uint64_t(n); ++id)
    neg += apply_reward_flips({1, 1, -1, -1}, id, p)[0] < 0;
  const double sigma = std::sqrt(expected * (1 - expected) / n);
  EXPECT_NEAR(double(neg) / n, expected, 3 * sigma);
}

TEST(Reset, DefaultSpawnIsStable) {
  auto l = share(generate_level(MazeVariant::kBlocks, 3, 0.0));
  Rng rng(1);
  auto a = reset(l, SpawnMode::kDefault, rng);
  auto b = reset(l, SpawnMode::kDefault, rng);
  EXPECT_EQ(a.agent, b.agent);
  EXPECT_EQ(a.step_count, 0);
  EXPECT_FALSE(a.done);
  for (bool c : a.consumed) EXPECT_FALSE(c);
}

TEST(Reset, RandomSpawnCoversEligibleCellsUniformly) {
  auto l = share(generate_level(MazeVariant::kBasic, 11, 0.0));
  Rng rng(42);
  std::map<std::pair<int, int>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto st = reset(l, SpawnMode::kRandom, rng);
    ASSERT_FALSE(l->layout.wall(st.agent));
    ASSERT_LT(l->object_at(st.agent), 0);
    ++counts[{st.agent.row, st.agent.col}];
  }
  const int k = 7 * 7 - kNumObjects;
  ASSERT_EQ(int(counts.size()), k);
  const double e = double(n) / k;
  double chi2 = 0.0;
  for (auto& [cell, c] : counts) chi2 += (c - e) * (c - e) / e;
  // Wilson-Hilferty upper 0.1% point of chi-square with k-1 dof.
  const double df = k - 1, z = 3.09;
  const double crit = df * std::pow(1 - 2 / (9 * df) + z * std::sqrt(2 / (9 * df)), 3);
  EXPECT_LT(chi2, crit);

  Rng r1(5), r2(5);
  EXPECT_EQ(reset(l, SpawnMode::kRandom, r1).agent, reset(l, SpawnMode::kRandom, r2).agent);
}

LevelConfig small_room() {
  return level_from_map({"#######",
                         "#A1...#",
                         "#.....#",
                         "#..2..#",
                         "#3...4#",
                         "#....0#",
                         "#######"},
                        {0.1, 1.0, 1.0, -1.0, -1.0});
}

TEST(Step, BumpIntoWall) {
  auto st = reset(share(small_room()));
  auto out = step(st, Action::kUp);
  EXPECT_EQ(st.agent, (Cell{1, 1}));
  EXPECT_DOUBLE_EQ(out.reward, kBumpPenalty);
  EXPECT_TRUE(out.info.bumped);
  EXPECT_FALSE(out.done);
  out = step(st, Action::kStay);
  EXPECT_DOUBLE_EQ(out.reward, 0.0);
  EXPECT_FALSE(out.info.bumped);
}

TEST(Step, ScriptedRouteCollectsTwoPointOne) {
  auto st = reset(share(small_room()));
  const Action route[] = {Action::kRight,  // 1
                          Action::kDown, Action::kDown, Action::kRight,  // 2 at (3,3)
                          Action::kRight, Action::kDown, Action::kDown, Action::kRight};  // 0
  StepOutcome out;
  for (Action a : route) out = step(st, a);
  EXPECT_TRUE(out.done);
  EXPECT_EQ(out.info.consumed_object, kTerminalObject);
  EXPECT_NEAR(st.cumulative_reward, 2.1, 1e-12);
  EXPECT_THROW(step(st, Action::kStay), ContractViolation);
}

TEST(Step, GeneratedBasicLevelOracleRouteIsTwoPointOne) {
  auto l = share(generate_level(MazeVariant::kBasic, 7, 0.0));
  auto res = oracle_optimal_reward(l);
  auto st = reset(l);
  for (Action a : res.witness) step(st, a);
  EXPECT_TRUE(st.done);
  EXPECT_TRUE(st.consumed[1] && st.consumed[2] && st.consumed[0]);
  EXPECT_NEAR(st.cumulative_reward, 2.1, 1e-12);
}

TEST(Step, TimeoutAfterTwoHundredStays) {
  auto st = reset(share(small_room()));
  StepOutcome out;
  for (int i = 0; i < kMaxEpisodeSteps; ++i) {
    ASSERT_FALSE(st.done);
    out = step(st, Action::kStay);
  }
  EXPECT_TRUE(out.done);
  EXPECT_TRUE(out.info.timed_out);
  EXPECT_DOUBLE_EQ(st.cumulative_reward, -1.0);
  EXPECT_EQ(st.step_count, kMaxEpisodeSteps);
}

void expect_observation_invariants(const EnvState& st) {
  auto obs = observe(st);
  const auto& l = *st.level;
  const int n = l.size();
  ASSERT_EQ(obs.data.size(), std::size_t(kObservationChannels * n * n));
  for (float x : obs.data) ASSERT_TRUE(x == 0.0f || x == 1.0f);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) ASSERT_EQ(obs.at(0, r, c), l.layout.wall({r, c}) ? 1.0f : 0.0f);
  for (int o = 0; o < kNumObjects; ++o) {
    auto ch = obs.channel(1 + o);
    const float sum = std::accumulate(ch.begin(), ch.end(), 0.0f);
    ASSERT_EQ(sum, st.consumed[o] ? 0.0f : 1.0f);
    if (!st.consumed[o]) {
      ASSERT_EQ(obs.at(1 + o, l.object_cells[o].row, l.object_cells[o].col), 1.0f);
    }
  }
  auto agent = obs.channel(kAgentChannel);
  ASSERT_EQ(std::accumulate(agent.begin(), agent.end(), 0.0f), 1.0f);
  ASSERT_EQ(obs.at(kAgentChannel, st.agent.row, st.agent.col), 1.0f);
}

TEST(Observe, ConsumingObjectClearsItsChannel) {
  auto st = reset(share(small_room()));
  auto before = observe(st);
  step(st, Action::kRight);
  auto after = observe(st);
  auto ch1 = after.channel(2);
  EXPECT_EQ(std::accumulate(ch1.begin(), ch1.end(), 0.0f), 0.0f);
  for (int ch : {0, 1, 3, 4, 5}) {
    auto a = before.channel(ch), b = after.channel(ch);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << "channel " << ch;
  }
}

TEST(Property, RandomRolloutsKeepInvariantsAndRewardDecomposition) {
  Rng rng(2024);
  for (auto v : kVariants)
    for (std::uint64_t id = 0; id < 30; ++id) {
      auto l = share(generate_level(v, id, 0.5));
      auto st = reset(l, id % 2 ? SpawnMode::kRandom : SpawnMode::kDefault, rng);
      expect_observation_invariants(st);
      double objects = 0.0;
      int bumps = 0;
      bool timed_out = false;
      while (!st.done) {
        auto out = step(st, static_cast<Action>(rng.below(kNumActions)));
        const double parts = (out.info.consumed_object ? l->object_rewards[*out.info.consumed_object] : 0.0) +
                             (out.info.bumped ? kBumpPenalty : 0.0) +
                             (out.info.timed_out ? kTimeoutPenalty : 0.0);
        ASSERT_DOUBLE_EQ(out.reward, parts);
        if (out.info.consumed_object) objects += l->object_rewards[*out.info.consumed_object];
        bumps += out.info.bumped;
        timed_out |= out.info.timed_out;
        ASSERT_FALSE(l->layout.wall(st.agent));
        ASSERT_LE(st.step_count, kMaxEpisodeSteps);
        expect_observation_invariants(st);
      }
      EXPECT_NEAR(st.cumulative_reward, objects + kBumpPenalty * bumps + (timed_out ? -1.0 : 0.0),
                  1e-9);
      EXPECT_TRUE(st.consumed[kTerminalObject] || st.step_count == kMaxEpisodeSteps);
    }
}

TEST(LevelIo, RoundTrip) {
  for (auto v : kVariants) {
    auto l = generate_level(v, 99, 0.4);
    EXPECT_EQ(level_from_json(level_to_json(l)), l);
  }
}

}  // namespace
}  // namespace gridlab
