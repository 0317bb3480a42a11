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

#include <cstdint>
#include <memory>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gridlab/error.hpp"
#include "gridlab/gridworld.hpp"
#include "gridlab/rng.hpp"

namespace gridlab {

/// An ordered list of level ids for one maze variant. Training pools carry the
/// run's flip probability; test pools always use 0.
struct LevelPool {
  MazeVariant variant = MazeVariant::kBasic;
  std::vector<std::uint64_t> ids;
  double flip_prob = 0.0;

  std::size_t size() const { return ids.size(); }

  LevelPtr level(std::size_t i) const {
    return std::make_shared<const LevelConfig>(generate_level(variant, ids.at(i), flip_prob));
  }

  // Generates every level; spreads the work over `threads` threads.
  std::vector<LevelPtr> instantiate(unsigned threads = 1) const {
    std::vector<LevelPtr> out(ids.size());
    threads = std::max(1u, std::min<unsigned>(threads, unsigned(ids.size())));
    if (threads == 1) {
      for (std::size_t i = 0; i < ids.size(); ++i) out[i] = level(i);
      return out;
    }
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < ids.size(); i += threads) out[i] = level(i);
      });
    pool.clear();
    return out;
  }
};

struct PoolPair {
  LevelPool train;
  LevelPool test;
};

/// Draws n_train + n_test distinct level ids from the master seed; the first
/// n_train go to the training pool.
inline PoolPair split_pools(std::uint64_t master_seed, std::size_t n_train, std::size_t n_test,
                            MazeVariant variant = MazeVariant::kBasic,
                            double train_flip_prob = 0.0) {
  if (n_train == 0 || n_test == 0)
    throw ContractViolation("split_pools: pool sizes must be positive");
  Rng rng(master_seed, stream_tag::kPools);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(n_train + n_test);
  std::vector<std::uint64_t> ids;
  ids.reserve(n_train + n_test);
  while (ids.size() < n_train + n_test) {
    std::uint64_t id = rng.next();
    if (seen.insert(id).second) ids.push_back(id);
  }
  PoolPair out;
  out.train = {variant, {ids.begin(), ids.begin() + std::ptrdiff_t(n_train)}, train_flip_prob};
  out.test = {variant, {ids.begin() + std::ptrdiff_t(n_train), ids.end()}, 0.0};
  return out;
}

}  // namespace gridlab
