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

// Procedural maze levels and the episodic step dynamics.
//
// A level is a pure function of (variant, level id, flip probability). The
// grid size includes the outer wall ring: BASIC is 9x9 (7x7 walkable
// interior), BLOCKS and TUNNEL are 13x13.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridlab/error.hpp"
#include "gridlab/rng.hpp"

namespace gridlab {

enum class Action : std::uint8_t { kUp = 0, kDown, kLeft, kRight, kStay };
inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::kUp, Action::kDown, Action::kLeft, Action::kRight, Action::kStay};

inline constexpr int kNumObjects = 5;
inline constexpr int kTerminalObject = 0;
inline constexpr int kMaxEpisodeSteps = 200;
inline constexpr double kTerminalReward = 0.1;
inline constexpr double kBumpPenalty = -0.01;
inline constexpr double kTimeoutPenalty = -1.0;
inline constexpr double kPositiveRewardTotal = 2.0;
inline constexpr double kMaxEpisodeReward = 2.1;
inline constexpr std::array<double, 4> kBaseRewards = {1.0, 1.0, -1.0, -1.0};

// wall, object0..object4, agent
inline constexpr int kObservationChannels = 2 + kNumObjects;
inline constexpr int kAgentChannel = kObservationChannels - 1;

enum class MazeVariant : std::uint8_t { kBasic = 0, kBlocks, kTunnel };

inline constexpr int grid_size(MazeVariant v) {
  return v == MazeVariant::kBasic ? 9 : 13;
}

inline constexpr int kBlocksObstacles = 8;

inline std::string_view to_string(MazeVariant v);
inline std::optional<MazeVariant> parse_variant(std::string_view s);
inline std::string_view to_string(Action a);
inline std::optional<Action> parse_action(std::string_view s);

struct Cell {
  int row = 0;
  int col = 0;
  friend constexpr bool operator==(Cell, Cell) = default;
  friend constexpr auto operator<=>(Cell, Cell) = default;
};

inline constexpr Cell neighbor(Cell c, Action a) {
  switch (a) {
    case Action::kUp: return {c.row - 1, c.col};
    case Action::kDown: return {c.row + 1, c.col};
    case Action::kLeft: return {c.row, c.col - 1};
    case Action::kRight: return {c.row, c.col + 1};
    case Action::kStay: break;
  }
  return c;
}

/// Square occupancy grid. Cells outside the grid read as walls.
class Layout {
 public:
  Layout() = default;
  explicit Layout(int size) : size_(size), walls_(std::size_t(size) * size, 0) {}

  int size() const { return size_; }
  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.col >= 0 && c.row < size_ && c.col < size_;
  }
  bool wall(Cell c) const { return !in_bounds(c) || walls_[index(c)] != 0; }
  void set_wall(Cell c, bool w) { walls_[index(c)] = w ? 1 : 0; }
  std::size_t index(Cell c) const { return std::size_t(c.row) * size_ + c.col; }
  Cell cell(std::size_t i) const { return {int(i / size_), int(i % size_)}; }
  std::size_t num_cells() const { return walls_.size(); }

  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (std::size_t i = 0; i < walls_.size(); ++i)
      if (!walls_[i]) out.push_back(cell(i));
    return out;
  }

  // One string per row, '#' for walls and '.' for free cells.
  std::vector<std::string> rows() const {
    std::vector<std::string> out(size_, std::string(size_, '.'));
    for (int r = 0; r < size_; ++r)
      for (int c = 0; c < size_; ++c)
        if (wall({r, c})) out[r][c] = '#';
    return out;
  }

  friend bool operator==(const Layout&, const Layout&) = default;

 private:
  int size_ = 0;
  std::vector<std::uint8_t> walls_;
};

struct LevelConfig {
  MazeVariant variant = MazeVariant::kBasic;
  std::uint64_t level_id = 0;
  double flip_prob = 0.0;
  Layout layout;
  std::array<Cell, kNumObjects> object_cells{};
  std::array<double, kNumObjects> object_rewards{};
  Cell default_spawn;

  int size() const { return layout.size(); }

  // Object id at `c`, or -1.
  int object_at(Cell c) const {
    for (int i = 0; i < kNumObjects; ++i)
      if (object_cells[i] == c) return i;
    return -1;
  }

  friend bool operator==(const LevelConfig&, const LevelConfig&) = default;
};

using LevelPtr = std::shared_ptr<const LevelConfig>;

// ---------------------------------------------------------------------------
// Reward randomization

/// Independently negates each of the four non-terminal rewards with
/// probability `flip_prob`, redrawing the whole mask from the next substream
/// while no reward is positive, then rescales so the positive rewards sum to
/// exactly 2.
inline std::array<double, 4> apply_reward_flips(
    std::array<double, 4> base, std::uint64_t level_id, double flip_prob) {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
    throw ContractViolation("flip_prob must lie in [0, 1]");
  constexpr int kMaxRedraws = 4096;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Rng rng(level_id, stream_tag::kFlips, std::uint64_t(attempt));
    std::array<double, 4> out = base;
    double positive = 0.0;
    for (double& r : out) {
      if (rng.uniform() < flip_prob) r = -r;
      if (r > 0) positive += r;
    }
    if (positive <= 0.0) continue;
    const double scale = kPositiveRewardTotal / positive;
    if (scale != 1.0)
      for (double& r : out) r *= scale;
    return out;
  }
  throw GenerationExhausted("apply_reward_flips: no mask with a positive reward");
}

// ---------------------------------------------------------------------------
// Path utilities shared by the generator and its tests

inline constexpr int kUnreachable = -1;

/// BFS step distances from `source`. Cells marked in `blocked` cannot be
/// entered, except that they do receive a distance when first touched if
/// `enter_blocked` is set (used to reach a blocked target without passing
/// through it).
inline std::vector<int> bfs_distances(const Layout& layout, Cell source,
                                      std::span<const std::uint8_t> blocked,
                                      bool enter_blocked = false) {
  std::vector<int> dist(layout.num_cells(), kUnreachable);
  std::deque<Cell> queue;
  dist[layout.index(source)] = 0;
  queue.push_back(source);
  while (!queue.empty()) {
    Cell c = queue.front();
    queue.pop_front();
    const int d = dist[layout.index(c)];
    for (int a = 0; a < 4; ++a) {
      Cell n = neighbor(c, static_cast<Action>(a));
      if (layout.wall(n)) continue;
      const std::size_t ni = layout.index(n);
      if (dist[ni] != kUnreachable) continue;
      if (!blocked.empty() && blocked[ni]) {
        if (enter_blocked) dist[ni] = d + 1;
        continue;
      }
      dist[ni] = d + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

inline bool free_cells_connected(const Layout& layout) {
  auto free = layout.free_cells();
  if (free.empty()) return false;
  auto dist = bfs_distances(layout, free.front(), {});
  return std::all_of(free.begin(), free.end(), [&](Cell c) {
    return dist[layout.index(c)] != kUnreachable;
  });
}

/// Length of the shortest route that starts at the spawn, collects every
/// positive object without touching a negative one or the terminating
/// object, and finally steps onto the terminating object. Returns nullopt if
/// no such route exists.
inline std::optional<int> shortest_collect_route(const LevelConfig& level) {
  const Layout& layout = level.layout;
  std::vector<std::uint8_t> blocked(layout.num_cells(), 0);
  std::vector<int> positives;
  for (int i = 0; i < kNumObjects; ++i) {
    if (i == kTerminalObject || level.object_rewards[i] < 0)
      blocked[layout.index(level.object_cells[i])] = 1;
    else if (level.object_rewards[i] > 0)
      positives.push_back(i);
  }
  // Waypoints: spawn, positives..., terminal
  std::vector<Cell> points = {level.default_spawn};
  for (int i : positives) points.push_back(level.object_cells[i]);
  const Cell terminal = level.object_cells[kTerminalObject];
  const std::size_t n = points.size();
  std::vector<std::vector<int>> d(n, std::vector<int>(n + 1, kUnreachable));
  for (std::size_t a = 0; a < n; ++a) {
    auto dist = bfs_distances(layout, points[a], blocked, true);
    for (std::size_t b = 0; b < n; ++b) d[a][b] = dist[layout.index(points[b])];
    d[a][n] = dist[layout.index(terminal)];
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 1; i < n; ++i) order.push_back(i);
  std::optional<int> best;
  do {
    int len = 0;
    std::size_t at = 0;
    bool ok = true;
    for (std::size_t next : order) {
      if (d[at][next] == kUnreachable) { ok = false; break; }
      len += d[at][next];
      at = next;
    }
    if (ok && d[at][n] != kUnreachable) {
      len += d[at][n];
      if (!best || len < *best) best = len;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

inline Layout bordered_room(int size) {
  Layout layout(size);
  for (int i = 0; i < size; ++i) {
    layout.set_wall({0, i}, true);
    layout.set_wall({size - 1, i}, true);
    layout.set_wall({i, 0}, true);
    layout.set_wall({i, size - 1}, true);
  }
  return layout;
}

inline Layout blocks_layout(Rng& rng) {
  const int size = grid_size(MazeVariant::kBlocks);
  Layout layout = bordered_room(size);
  std::vector<Cell> interior = layout.free_cells();
  // partial Fisher-Yates
  for (int k = 0; k < kBlocksObstacles; ++k) {
    std::size_t j = k + std::size_t(rng.below(interior.size() - k));
    std::swap(interior[k], interior[j]);
    layout.set_wall(interior[k], true);
  }
  return layout;
}

// Fraction of the remaining corridor walls knocked out after carving, which
// turns the perfect maze into one with loops.
inline constexpr double kTunnelBraidProb = 0.2;

/// Recursive-backtracker corridors. Maze nodes sit at odd coordinates; the
/// even-even pillars always stay walls so every internal wall belongs to a
/// contiguous run.
inline Layout tunnel_layout(Rng& rng) {
  const int size = grid_size(MazeVariant::kTunnel);
  Layout layout(size);
  for (std::size_t i = 0; i < layout.num_cells(); ++i)
    layout.set_wall(layout.cell(i), true);
  const int nodes = (size - 1) / 2;
  auto node_cell = [](int r, int c) { return Cell{2 * r + 1, 2 * c + 1}; };
  std::vector<std::uint8_t> visited(std::size_t(nodes) * nodes, 0);
  std::vector<std::pair<int, int>> stack;
  int r0 = int(rng.below(nodes)), c0 = int(rng.below(nodes));
  visited[r0 * nodes + c0] = 1;
  layout.set_wall(node_cell(r0, c0), false);
  stack.emplace_back(r0, c0);
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  while (!stack.empty()) {
    auto [r, c] = stack.back();
    int options[4];
    int n = 0;
    for (int k = 0; k < 4; ++k) {
      int nr = r + dr[k], nc = c + dc[k];
      if (nr < 0 || nc < 0 || nr >= nodes || nc >= nodes) continue;
      if (!visited[nr * nodes + nc]) options[n++] = k;
    }
    if (n == 0) {
      stack.pop_back();
      continue;
    }
    int k = options[rng.below(std::uint64_t(n))];
    int nr = r + dr[k], nc = c + dc[k];
    visited[nr * nodes + nc] = 1;
    layout.set_wall({2 * r + 1 + dr[k], 2 * c + 1 + dc[k]}, false);
    layout.set_wall(node_cell(nr, nc), false);
    stack.emplace_back(nr, nc);
  }
  // A pillar must keep at least one other wall neighbour so that no wall
  // becomes an isolated block.
  auto pillar_keeps_wall = [&](Cell pillar, Cell removed) {
    if (pillar.row == 0 || pillar.col == 0 || pillar.row == size - 1 ||
        pillar.col == size - 1)
      return true;
    for (Action a : {Action::kUp, Action::kDown, Action::kLeft, Action::kRight}) {
      Cell n = neighbor(pillar, a);
      if (n != removed && layout.wall(n)) return true;
    }
    return false;
  };
  for (int r = 1; r < size - 1; ++r) {
    for (int c = 1; c < size - 1; ++c) {
      const bool horizontal_gap = (r % 2 == 1) && (c % 2 == 0);
      const bool vertical_gap = (r % 2 == 0) && (c % 2 == 1);
      if (!(horizontal_gap || vertical_gap) || !layout.wall({r, c})) continue;
      if (!rng.bernoulli(kTunnelBraidProb)) continue;
      Cell p1 = horizontal_gap ? Cell{r - 1, c} : Cell{r, c - 1};
      Cell p2 = horizontal_gap ? Cell{r + 1, c} : Cell{r, c + 1};
      if (pillar_keeps_wall(p1, {r, c}) && pillar_keeps_wall(p2, {r, c}))
        layout.set_wall({r, c}, false);
    }
  }
  return layout;
}

inline constexpr std::uint64_t variant_salt(MazeVariant v) {
  return std::uint64_t(v) * 0x100000001B3ULL;
}

}  // namespace detail

/// Builds the layout for `variant` from the level id, retrying BLOCKS layouts
/// that would split the free space.
inline Layout generate_layout(MazeVariant variant, std::uint64_t level_id) {
  constexpr int kMaxAttempts = 1024;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(level_id, stream_tag::kLayout + detail::variant_salt(variant),
            std::uint64_t(attempt));
    Layout layout;
    switch (variant) {
      case MazeVariant::kBasic: layout = detail::bordered_room(grid_size(variant)); break;
      case MazeVariant::kBlocks: layout = detail::blocks_layout(rng); break;
      case MazeVariant::kTunnel: layout = detail::tunnel_layout(rng); break;
    }
    if (free_cells_connected(layout)) return layout;
  }
  throw GenerationExhausted("generate_layout: no connected layout");
}

inline LevelConfig generate_level(MazeVariant variant, std::uint64_t level_id,
                                  double flip_prob) {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
    throw ContractViolation("flip_prob must lie in [0, 1]");
  LevelConfig level;
  level.variant = variant;
  level.level_id = level_id;
  level.flip_prob = flip_prob;
  level.layout = generate_layout(variant, level_id);
  auto flipped = apply_reward_flips(kBaseRewards, level_id, flip_prob);
  level.object_rewards[kTerminalObject] = kTerminalReward;
  std::copy(flipped.begin(), flipped.end(), level.object_rewards.begin() + 1);

  std::vector<Cell> free = level.layout.free_cells();
  constexpr int kPicks = kNumObjects + 1;
  constexpr int kMaxAttempts = 10000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(level_id, stream_tag::kPlacement + detail::variant_salt(variant),
            std::uint64_t(attempt));
    std::vector<Cell> cells = free;
    for (int k = 0; k < kPicks; ++k) {
      std::size_t j = k + std::size_t(rng.below(cells.size() - k));
      std::swap(cells[k], cells[j]);
    }
    std::copy_n(cells.begin(), kNumObjects, level.object_cells.begin());
    level.default_spawn = cells[kNumObjects];
    auto route = shortest_collect_route(level);
    if (route && *route <= kMaxEpisodeSteps) return level;
  }
  throw GenerationExhausted("generate_level: no solvable object placement");
}

// ---------------------------------------------------------------------------
// Episode dynamics

enum class SpawnMode : std::uint8_t { kDefault, kRandom };

struct EnvState {
  LevelPtr level;
  Cell agent;
  std::array<bool, kNumObjects> consumed{};
  int step_count = 0;
  bool done = false;
  double cumulative_reward = 0.0;
};

struct StepInfo {
  bool bumped = false;
  std::optional<int> consumed_object;
  bool timed_out = false;
};

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Cells eligible for a random spawn: free and not holding an object.
inline std::vector<Cell> spawn_candidates(const LevelConfig& level) {
  std::vector<Cell> out;
  for (Cell c : level.layout.free_cells())
    if (level.object_at(c) < 0) out.push_back(c);
  return out;
}

inline EnvState reset(LevelPtr level, SpawnMode mode, Rng& rng) {
  if (!level) throw ContractViolation("reset: null level");
  EnvState st;
  st.agent = level->default_spawn;
  if (mode == SpawnMode::kRandom) {
    auto cells = spawn_candidates(*level);
    st.agent = cells[rng.below(cells.size())];
  }
  st.level = std::move(level);
  return st;
}

inline EnvState reset(LevelPtr level) {
  Rng unused(0);
  return reset(std::move(level), SpawnMode::kDefault, unused);
}

inline StepOutcome step(EnvState& st, Action action) {
  if (st.done) throw ContractViolation("step: episode already finished");
  const LevelConfig& level = *st.level;
  StepOutcome out;
  const Cell target = neighbor(st.agent, action);
  if (action != Action::kStay) {
    if (level.layout.wall(target)) {
      out.info.bumped = true;
      out.reward += kBumpPenalty;
    } else {
      st.agent = target;
      const int obj = level.object_at(target);
      if (obj >= 0 && !st.consumed[obj]) {
        st.consumed[obj] = true;
        out.info.consumed_object = obj;
        out.reward += level.object_rewards[obj];
        if (obj == kTerminalObject) out.done = true;
      }
    }
  }
  ++st.step_count;
  if (!out.done && st.step_count >= kMaxEpisodeSteps) {
    out.info.timed_out = true;
    out.reward += kTimeoutPenalty;
    out.done = true;
  }
  st.done = out.done;
  st.cumulative_reward += out.reward;
  return out;
}

// ---------------------------------------------------------------------------
// Observation

/// Channel-major (C, H, W) one-hot tensor.
struct Observation {
  int size = 0;
  std::vector<float> data;

  std::size_t offset(int channel, int row, int col) const {
    return (std::size_t(channel) * size + row) * size + col;
  }
  float at(int channel, int row, int col) const {
    return data[offset(channel, row, col)];
  }
  std::span<const float> channel(int ch) const {
    return std::span<const float>(data).subspan(std::size_t(ch) * size * size,
                                                std::size_t(size) * size);
  }
};

inline void observe_into(const EnvState& st, std::span<float> out) {
  const LevelConfig& level = *st.level;
  const int n = level.size();
  const std::size_t plane = std::size_t(n) * n;
  if (out.size() != plane * kObservationChannels)
    throw ContractViolation("observe_into: buffer size mismatch");
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t i = 0; i < plane; ++i)
    if (level.layout.wall(level.layout.cell(i))) out[i] = 1.0f;
  for (int o = 0; o < kNumObjects; ++o) {
    if (st.consumed[o]) continue;
    out[plane * (1 + o) + level.layout.index(level.object_cells[o])] = 1.0f;
  }
  out[plane * kAgentChannel + level.layout.index(st.agent)] = 1.0f;
}

inline Observation observe(const EnvState& st) {
  Observation obs;
  obs.size = st.level->size();
  obs.data.resize(std::size_t(kObservationChannels) * obs.size * obs.size);
  observe_into(st, obs.data);
  return obs;
}

// ---------------------------------------------------------------------------
// Names

inline std::string_view to_string(MazeVariant v) {
  switch (v) {
    case MazeVariant::kBasic: return "basic";
    case MazeVariant::kBlocks: return "blocks";
    case MazeVariant::kTunnel: return "tunnel";
  }
  return "?";
}

inline std::optional<MazeVariant> parse_variant(std::string_view s) {
  for (auto v : {MazeVariant::kBasic, MazeVariant::kBlocks, MazeVariant::kTunnel})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::kUp: return "up";
    case Action::kDown: return "down";
    case Action::kLeft: return "left";
    case Action::kRight: return "right";
    case Action::kStay: return "stay";
  }
  return "?";
}

inline std::optional<Action> parse_action(std::string_view s) {
  for (Action a : kAllActions)
    if (s == to_string(a)) return a;
  return std::nullopt;
}

/// Builds a level from a character map: '#' wall, '.' free, '0'-'4' objects,
/// 'A' spawn. Intended for hand-built fixtures.
inline LevelConfig level_from_map(const std::vector<std::string>& rows,
                                  const std::array<double, kNumObjects>& rewards,
                                  MazeVariant variant = MazeVariant::kBasic) {
  const int n = int(rows.size());
  LevelConfig level;
  level.variant = variant;
  level.layout = Layout(n);
  level.object_rewards = rewards;
  std::array<bool, kNumObjects> seen{};
  bool spawn = false;
  for (int r = 0; r < n; ++r) {
    if (int(rows[r].size()) != n)
      throw ContractViolation("level_from_map: map must be square");
    for (int c = 0; c < n; ++c) {
      char ch = rows[r][c];
      if (ch == '#') {
        level.layout.set_wall({r, c}, true);
      } else if (ch >= '0' && ch < '0' + kNumObjects) {
        level.object_cells[ch - '0'] = {r, c};
        seen[ch - '0'] = true;
      } else if (ch == 'A') {
        level.default_spawn = {r, c};
        spawn = true;
      } else if (ch != '.') {
        throw ContractViolation(std::string("level_from_map: bad cell '") + ch + "'");
      }
    }
  }
  if (!spawn || !std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw ContractViolation("level_from_map: map needs 'A' and all objects 0-4");
  return level;
}

}  // namespace gridlab
