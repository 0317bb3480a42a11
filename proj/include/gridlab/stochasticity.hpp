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

// Sticky actions and random spawns, composed between an agent and the maze.
//
// Composition order is fixed: the spawn is randomized once at reset, and the
// sticky transform sits between the proposed and executed action on every
// step.

#include <concepts>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gridlab/error.hpp"
#include "gridlab/gridworld.hpp"
#include "gridlab/rng.hpp"

namespace gridlab {

enum class StickyMode : std::uint8_t {
  kDefault,      // repeat the previously proposed action
  kAlternative,  // repeat the previously executed action
};

inline std::string_view to_string(StickyMode m) {
  return m == StickyMode::kDefault ? "default" : "alternative";
}

inline std::optional<StickyMode> parse_sticky_mode(std::string_view s) {
  if (s == "default") return StickyMode::kDefault;
  if (s == "alternative") return StickyMode::kAlternative;
  return std::nullopt;
}

struct StickySettings {
  double zeta = 0.0;
  StickyMode mode = StickyMode::kDefault;
  friend bool operator==(const StickySettings&, const StickySettings&) = default;
};

struct StickyState {
  double zeta = 0.0;
  StickyMode mode = StickyMode::kDefault;
  Action prev_proposed = Action::kStay;
  Action prev_executed = Action::kStay;

  static StickyState fresh(const StickySettings& s) {
    return StickyState{s.zeta, s.mode, Action::kStay, Action::kStay};
  }
};

inline Action sticky_transform(Action proposed, StickyState& st, Rng& rng) {
  Action executed = proposed;
  if (st.zeta > 0.0 && rng.uniform() < st.zeta)
    executed = st.mode == StickyMode::kDefault ? st.prev_proposed : st.prev_executed;
  st.prev_proposed = proposed;
  st.prev_executed = executed;
  return executed;
}

enum class Stage : std::uint8_t { kTraining, kEvaluation };

struct WrapperConfig {
  std::optional<StickySettings> sticky;
  bool random_spawn = false;
  Stage stage = Stage::kEvaluation;

  void validate() const {
    if (sticky && !(sticky->zeta >= 0.0 && sticky->zeta <= 1.0))
      throw ContractViolation("sticky zeta must lie in [0, 1]");
  }
  friend bool operator==(const WrapperConfig&, const WrapperConfig&) = default;
};

/// One environment step as seen by the agent and the environment.
struct Frame {
  int index = 0;
  Cell agent;  // position before the step
  Action proposed = Action::kStay;
  Action executed = Action::kStay;
  double reward = 0.0;
  double cumulative = 0.0;
  bool done = false;
  bool bumped = false;
  int consumed = -1;

  // The proposed action did not happen as asked: overridden by stickiness or
  // blocked by a wall.
  bool failed() const { return executed != proposed || bumped; }
};

struct EpisodeTrace {
  LevelPtr level;
  Cell spawn;
  std::vector<Frame> frames;
  double episode_reward = 0.0;
};

/// Environment with wrappers applied. Each episode draws its spawn and sticky
/// coins from substreams of the episode seed, so traces are reproducible.
class WrappedEnv {
 public:
  explicit WrappedEnv(WrapperConfig config) : config_(std::move(config)) {
    config_.validate();
  }

  const EnvState& reset(LevelPtr level, std::uint64_t episode_seed) {
    Rng spawn_rng(episode_seed, stream_tag::kSpawn);
    state_ = gridlab::reset(std::move(level),
                            config_.random_spawn ? SpawnMode::kRandom : SpawnMode::kDefault,
                            spawn_rng);
    sticky_rng_ = Rng(episode_seed, stream_tag::kSticky);
    sticky_ = StickyState::fresh(config_.sticky.value_or(StickySettings{}));
    return state_;
  }

  struct Result {
    Action executed;
    StepOutcome outcome;
  };

  Result step(Action proposed) {
    Action executed = config_.sticky ? sticky_transform(proposed, sticky_, sticky_rng_)
                                     : proposed;
    return {executed, gridlab::step(state_, executed)};
  }

  const EnvState& state() const { return state_; }
  const WrapperConfig& config() const { return config_; }

 private:
  WrapperConfig config_;
  EnvState state_;
  StickyState sticky_;
  Rng sticky_rng_{0};
};

/// Agents map (observation, step index, rng) to a proposed action.
template <class A>
concept Agent = requires(A a, const Observation& obs, int t, Rng& rng) {
  { a(obs, t, rng) } -> std::convertible_to<Action>;
};

template <Agent A>
EpisodeTrace wrap_episode(LevelPtr level, A&& agent, const WrapperConfig& config,
                          std::uint64_t episode_seed) {
  WrappedEnv env(config);
  env.reset(std::move(level), episode_seed);
  Rng policy_rng(episode_seed, stream_tag::kPolicy);
  EpisodeTrace trace;
  trace.level = env.state().level;
  trace.spawn = env.state().agent;
  Observation obs;
  while (!env.state().done) {
    obs = observe(env.state());
    Frame f;
    f.index = env.state().step_count;
    f.agent = env.state().agent;
    f.proposed = agent(obs, f.index, policy_rng);
    auto [executed, out] = env.step(f.proposed);
    f.executed = executed;
    f.reward = out.reward;
    f.cumulative = env.state().cumulative_reward;
    f.done = out.done;
    f.bumped = out.info.bumped;
    f.consumed = out.info.consumed_object.value_or(-1);
    trace.frames.push_back(f);
  }
  trace.episode_reward = env.state().cumulative_reward;
  return trace;
}

}  // namespace gridlab
