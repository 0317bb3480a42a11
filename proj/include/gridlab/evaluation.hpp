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

#pragma once

// Evaluation protocols over level pools, the exact planner, the open-loop
// baseline, and top-k run selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gridlab/error.hpp"
#include "gridlab/gridworld.hpp"
#include "gridlab/policynet.hpp"
#include "gridlab/pools.hpp"
#include "gridlab/rng.hpp"
#include "gridlab/stochasticity.hpp"
#include "json.hpp"

namespace gridlab {

// ---------------------------------------------------------------------------
// Protocols and reports

enum class PoolKind : std::uint8_t { kTrain, kTest };

inline std::string_view to_string(PoolKind k) { return k == PoolKind::kTrain ? "train" : "test"; }

inline constexpr int kDefaultEvalEpisodes = 1000;

struct EvalProtocol {
  PoolKind pool = PoolKind::kTest;
  std::optional<StickySettings> sticky;
  bool random_spawn = false;
  int episodes = kDefaultEvalEpisodes;
  bool greedy = false;  // argmax instead of sampling

  WrapperConfig wrappers() const { return {sticky, random_spawn, Stage::kEvaluation}; }

  // e.g. "train+sticky(default,0.25)+spawn"
  std::string name() const {
    std::string s(to_string(pool));
    if (sticky) {
      std::ostringstream os;
      os << "+sticky(" << to_string(sticky->mode) << ',' << sticky->zeta << ')';
      s += os.str();
    }
    if (random_spawn) s += "+spawn";
    if (greedy) s += "+greedy";
    return s;
  }

  void validate() const {
    if (episodes < 1) throw ConfigError({"protocol episodes must be at least 1"});
    wrappers().validate();
  }
};

struct LevelStat {
  std::uint64_t level_id = 0;
  double mean = 0.0;
  int episodes = 0;
};

struct EvalReport {
  std::string protocol;
  double mean = 0.0;
  double std_error = 0.0;
  int episodes = 0;
  std::vector<double> rewards;  // by episode index
  std::vector<LevelStat> per_level;
  std::vector<EpisodeTrace> traces;  // first `keep_traces` episodes
};

inline nlohmann::ordered_json to_json(const EvalReport& r, bool with_rewards = false) {
  nlohmann::ordered_json j;
  j["protocol"] = r.protocol;
  j["mean"] = r.mean;
  j["std_error"] = r.std_error;
  j["episodes"] = r.episodes;
  auto levels = nlohmann::ordered_json::array();
  for (const auto& l : r.per_level)
    levels.push_back({{"level_id", l.level_id}, {"mean", l.mean}, {"episodes", l.episodes}});
  j["per_level"] = levels;
  if (with_rewards) j["rewards"] = r.rewards;
  return j;
}

inline double mean_of(std::span<const double> xs) {
  return xs.empty() ? std::nan("")
                    : std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

inline double std_error_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
}

/// Runs `protocol.episodes` episodes cycling `levels` round-robin. Episode e
/// uses seed derive_seed(seed, kEpisode, e); `make_agent(e)` builds the agent
/// for that episode. Work is spread over `threads` threads and merged by
/// episode index, so the report does not depend on the thread count.
template <class MakeAgent>
EvalReport evaluate_agent(const std::vector<LevelPtr>& levels, const EvalProtocol& protocol,
                          std::uint64_t seed, MakeAgent&& make_agent, unsigned threads = 1,
                          std::size_t keep_traces = 0) {
  protocol.validate();
  if (levels.empty()) throw ContractViolation("evaluate: empty level pool");
  const auto wrappers = protocol.wrappers();
  const std::size_t n = std::size_t(protocol.episodes);
  std::vector<double> rewards(n);
  std::vector<EpisodeTrace> traces(std::min(keep_traces, n));
  auto run = [&](std::size_t e) {
    auto agent = make_agent(e);
    auto trace = wrap_episode(levels[e % levels.size()], agent, wrappers,
                              derive_seed(seed, stream_tag::kEpisode, e));
    rewards[e] = trace.episode_reward;
    if (e < traces.size()) traces[e] = std::move(trace);
  };
  threads = std::max(1u, std::min<unsigned>(threads, unsigned(n)));
  if (threads == 1) {
    for (std::size_t e = 0; e < n; ++e) run(e);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          try {
            for (std::size_t e = t; e < n; e += threads) run(e);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
    }
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  EvalReport rep;
  rep.protocol = protocol.name();
  rep.episodes = int(n);
  rep.mean = mean_of(rewards);
  rep.std_error = std_error_of(rewards);
  std::vector<double> sums(levels.size(), 0.0);
  std::vector<int> counts(levels.size(), 0);
  for (std::size_t e = 0; e < n; ++e) {
    sums[e % levels.size()] += rewards[e];
    ++counts[e % levels.size()];
  }
  for (std::size_t i = 0; i < levels.size() && counts[i] > 0; ++i)
    rep.per_level.push_back({levels[i]->level_id, sums[i] / counts[i], counts[i]});
  rep.rewards = std::move(rewards);
  rep.traces = std::move(traces);
  return rep;
}

/// Acts by sampling (or maximizing) the policy of a fixed network.
struct NetworkAgent {
  const PolicyValueNet<float>* net = nullptr;
  bool greedy = false;
  ForwardCache<float> cache;

  Action operator()(const Observation& obs, int, Rng& rng) {
    net->forward(obs.data, cache);
    return greedy ? greedy_action<float>(cache.logits) : sample_action<float>(cache.logits, rng);
  }
};

inline EvalReport evaluate(const PolicyValueNet<float>& net, const std::vector<LevelPtr>& levels,
                           const EvalProtocol& protocol, std::uint64_t seed,
                           unsigned threads = 1, std::size_t keep_traces = 0) {
  for (const auto& l : levels)
    if (l->size() != net.grid())
      throw ContractViolation("evaluate: network grid does not match level size");
  return evaluate_agent(
      levels, protocol, seed, [&](std::size_t) { return NetworkAgent{&net, protocol.greedy, {}}; },
      threads, keep_traces);
}

/// Instantiates the pool a protocol refers to.
inline const LevelPool& protocol_pool(const PoolPair& pools, const EvalProtocol& p) {
  return p.pool == PoolKind::kTrain ? pools.train : pools.test;
}

// ---------------------------------------------------------------------------
// Planner oracle

/// Exact dynamic program over (steps taken, agent cell, which of objects 1..4
/// are consumed). It models the full step rule, including wall bumps,
/// walking over negative objects, and the timeout, so its optimum is the true
/// maximum episode reward from any state.
class Planner {
 public:
  explicit Planner(LevelPtr level) : level_(std::move(level)) {
    const Layout& lay = level_->layout;
    const std::size_t nc = lay.num_cells();
    cell_of_.assign(nc, -1);
    for (std::size_t i = 0; i < nc; ++i)
      if (!lay.wall(lay.cell(i))) {
        cell_of_[i] = int(cells_.size());
        cells_.push_back(lay.cell(i));
      }
    const std::size_t nf = cells_.size();
    next_.resize(nf * kNumActions);
    for (std::size_t c = 0; c < nf; ++c)
      for (Action a : kAllActions) {
        Cell t = neighbor(cells_[c], a);
        Move m;
        if (a == Action::kStay) {
          m = {int(c), false, -1};
        } else if (lay.wall(t)) {
          m = {int(c), true, -1};
        } else {
          m = {cell_of_[lay.index(t)], false, level_->object_at(t)};
        }
        next_[c * kNumActions + int(a)] = m;
      }

    const std::size_t per_t = nf * kMasks;
    value_.assign(per_t * (kMaxEpisodeSteps + 1), 0.0);
    length_.assign(per_t * (kMaxEpisodeSteps + 1), 0);
    best_.assign(per_t * kMaxEpisodeSteps, Action::kStay);
    for (int t = kMaxEpisodeSteps - 1; t >= 0; --t) {
      for (std::size_t c = 0; c < nf; ++c)
        for (int mask = 0; mask < kMasks; ++mask) {
          double best = -std::numeric_limits<double>::infinity();
          int best_len = 0;
          Action best_a = Action::kStay;
          for (Action a : kAllActions) {
            const Move& m = next_[c * kNumActions + int(a)];
            double r = m.bumped ? kBumpPenalty : 0.0;
            int nmask = mask;
            bool terminal = false;
            if (m.object == kTerminalObject) {
              r += level_->object_rewards[0];
              terminal = true;
            } else if (m.object > 0 && !(mask & (1 << (m.object - 1)))) {
              r += level_->object_rewards[m.object];
              nmask |= 1 << (m.object - 1);
            }
            double v;
            int len = 1;
            if (terminal) {
              v = r;
            } else if (t + 1 == kMaxEpisodeSteps) {
              v = r + kTimeoutPenalty;
            } else {
              const std::size_t nx = index(t + 1, std::size_t(m.cell), nmask);
              v = r + value_[nx];
              len += length_[nx];
            }
            // Rewards summed in different orders may differ in the last bits;
            // within kTieTolerance the shorter episode wins.
            if (v > best + kTieTolerance || (v >= best - kTieTolerance && len < best_len)) {
              best = v;
              best_len = len;
              best_a = a;
            }
          }
          value_[index(t, c, mask)] = best;
          length_[index(t, c, mask)] = best_len;
          best_[index(t, c, mask)] = best_a;
        }
      // The recursion does not depend on t below the timeout step, so once
      // two consecutive slices agree every earlier slice equals them too.
      if (t + 1 < kMaxEpisodeSteps && same_slice(t, t + 1)) {
        floor_ = t + 1;
        break;
      }
    }
  }

  const LevelPtr& level() const { return level_; }

  // Optimal value from `cell` after `t` steps with objects 1..4 consumed per
  // `consumed` (object 0 unconsumed).
  double value(int t, Cell cell, const std::array<bool, kNumObjects>& consumed) const {
    return value_[index(t, free_index(cell), mask_of(consumed))];
  }

  Action best_action(int t, Cell cell, const std::array<bool, kNumObjects>& consumed) const {
    return best_[index(t, free_index(cell), mask_of(consumed))];
  }

  Action best_action(const EnvState& st) const {
    return best_action(st.step_count, st.agent, st.consumed);
  }

  // Steps until the episode ends when following the planner.
  int remaining_steps(int t, Cell cell, const std::array<bool, kNumObjects>& consumed) const {
    return length_[index(t, free_index(cell), mask_of(consumed))];
  }

 private:
  static constexpr int kMasks = 1 << (kNumObjects - 1);
  static constexpr double kTieTolerance = 1e-9;

  bool same_slice(int a, int b) const {
    const auto va = value_.begin() + std::ptrdiff_t(index(a, 0, 0));
    const auto vb = value_.begin() + std::ptrdiff_t(index(b, 0, 0));
    const auto la = length_.begin() + std::ptrdiff_t(index(a, 0, 0));
    const auto lb = length_.begin() + std::ptrdiff_t(index(b, 0, 0));
    const auto n = std::ptrdiff_t(cells_.size() * kMasks);
    return std::equal(va, va + n, vb) && std::equal(la, la + n, lb);
  }

  struct Move {
    int cell = 0;
    bool bumped = false;
    int object = -1;
  };

  std::size_t index(int t, std::size_t c, int mask) const {
    return (std::size_t(std::max(t, floor_)) * cells_.size() + c) * kMasks + std::size_t(mask);
  }
  std::size_t free_index(Cell c) const {
    const int i = cell_of_.at(level_->layout.index(c));
    if (i < 0) throw ContractViolation("planner: cell is a wall");
    return std::size_t(i);
  }
  static int mask_of(const std::array<bool, kNumObjects>& consumed) {
    int m = 0;
    for (int o = 1; o < kNumObjects; ++o)
      if (consumed[o]) m |= 1 << (o - 1);
    return m;
  }

  LevelPtr level_;
  std::vector<Cell> cells_;
  std::vector<int> cell_of_;
  std::vector<Move> next_;
  std::vector<double> value_;
  std::vector<int> length_;
  std::vector<Action> best_;
  int floor_ = 0;  // slices below this index equal slice floor_
};

struct OracleResult {
  double reward = 0.0;          // witness replayed through the environment
  double planned_value = 0.0;   // dynamic-programming optimum
  std::vector<Action> witness;  // from the default spawn
  int bumps = 0;                // in the witness; an optimal route never bumps
};

/// Maximum undiscounted episode reward from the default spawn, with one
/// optimal action sequence.
inline OracleResult oracle_optimal_reward(const LevelPtr& level) {
  Planner planner(level);
  OracleResult res;
  EnvState st = reset(level);
  res.planned_value = planner.value(0, st.agent, st.consumed);
  while (!st.done) {
    const Action a = planner.best_action(st);
    res.witness.push_back(a);
    res.bumps += step(st, a).info.bumped ? 1 : 0;
  }
  res.reward = st.cumulative_reward;
  if (std::abs(res.reward - res.planned_value) > 1e-9)
    throw Error("planner: witness replay disagrees with the planned optimum");
  if (res.bumps != 0) throw Error("planner: optimal witness contains a wall bump");
  return res;
}

inline OracleResult oracle_optimal_reward(const LevelConfig& level) {
  return oracle_optimal_reward(std::make_shared<const LevelConfig>(level));
}

/// Closed-loop optimal agent: reads its cell and the remaining objects from
/// the observation and follows the planner.
struct OracleAgent {
  const Planner* planner = nullptr;

  Action operator()(const Observation& obs, int t, Rng&) const {
    const int n = obs.size;
    Cell agent{};
    std::array<bool, kNumObjects> consumed{};
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (obs.at(kAgentChannel, r, c) != 0.0f) agent = {r, c};
    for (int o = 0; o < kNumObjects; ++o) {
      const auto ch = obs.channel(1 + o);
      consumed[o] = std::find(ch.begin(), ch.end(), 1.0f) == ch.end();
    }
    return planner->best_action(t, agent, consumed);
  }
};

/// Acts uniformly at random.
struct RandomAgent {
  Action operator()(const Observation&, int, Rng& rng) const {
    return static_cast<Action>(rng.below(kNumActions));
  }
};

// ---------------------------------------------------------------------------
// Open-loop baseline

/// Replays a fixed action sequence, ignoring observations; STAY once the
/// sequence runs out.
struct OpenLoopAgent {
  const std::vector<Action>* actions = nullptr;

  Action operator()(const Observation&, int t, Rng&) const {
    return std::size_t(t) < actions->size() ? (*actions)[std::size_t(t)] : Action::kStay;
  }
};

struct OpenLoopScore {
  double reward = 0.0;
  int length = 0;  // steps until the episode ended
};

inline OpenLoopScore replay_openloop(const LevelPtr& level, std::span<const Action> actions) {
  EnvState st = reset(level);
  while (!st.done)
    step(st, std::size_t(st.step_count) < actions.size() ? actions[std::size_t(st.step_count)]
                                                          : Action::kStay);
  return {st.cumulative_reward, st.step_count};
}

struct BruteResult {
  std::vector<Action> actions;
  double reward = 0.0;
  std::size_t evaluations = 0;
};

/// Hill climbing over fixed action sequences replayed from the default spawn.
/// Mutations: change one action, randomize a short window, insert or delete
/// one action. Equal-scoring candidates are accepted so the search can drift
/// across plateaus; it restarts from a random sequence after
/// `restart_after` non-improving evaluations. `budget` counts candidate
/// evaluations; budget 0 returns the initial random sequence.
inline BruteResult brute_openloop(const LevelPtr& level, std::size_t budget, Rng& rng,
                                  std::size_t restart_after = 5000) {
  const std::size_t len = kMaxEpisodeSteps;
  auto random_seq = [&] {
    std::vector<Action> s(len);
    for (auto& a : s) a = static_cast<Action>(rng.below(kNumActions));
    return s;
  };
  std::vector<Action> cur = random_seq();
  OpenLoopScore cur_s = replay_openloop(level, cur);
  BruteResult best{cur, cur_s.reward, 0};
  std::size_t stall = 0;
  std::vector<Action> cand;
  for (std::size_t i = 0; i < budget; ++i) {
    cand = cur;
    const std::size_t span = std::min<std::size_t>(len, std::size_t(cur_s.length) + 1);
    const std::size_t pos = rng.below(span);
    const auto random_action = [&] { return static_cast<Action>(rng.below(kNumActions)); };
    switch (rng.below(4)) {
      case 0:
        cand[pos] = random_action();
        break;
      case 1: {
        const std::size_t w = 1 + rng.below(8);
        for (std::size_t k = pos; k < std::min(len, pos + w); ++k) cand[k] = random_action();
        break;
      }
      case 2:
        cand.insert(cand.begin() + std::ptrdiff_t(pos), random_action());
        cand.pop_back();
        break;
      default:
        cand.erase(cand.begin() + std::ptrdiff_t(pos));
        cand.push_back(random_action());
        break;
    }
    const OpenLoopScore s = replay_openloop(level, cand);
    ++best.evaluations;
    if (s.reward >= cur_s.reward) {
      stall = s.reward > cur_s.reward ? 0 : stall + 1;
      cur.swap(cand);
      cur_s = s;
      if (cur_s.reward > best.reward) {
        best.actions = cur;
        best.reward = cur_s.reward;
      }
    } else {
      ++stall;
    }
    if (stall >= restart_after) {
      cur = random_seq();
      cur_s = replay_openloop(level, cur);
      stall = 0;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Top-k selection

/// Indices of the k largest metrics, descending; ties go to the lower index.
/// NaN ranks last.
inline std::vector<std::size_t> top_k_select(std::span<const double> metrics, std::size_t k) {
  if (metrics.size() < k) throw ContractViolation("top_k_select: fewer runs than k");
  auto key = [&](std::size_t i) {
    return std::isnan(metrics[i]) ? -std::numeric_limits<double>::infinity() : metrics[i];
  };
  std::vector<std::size_t> idx(metrics.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  idx.resize(k);
  return idx;
}

}  // namespace gridlab
