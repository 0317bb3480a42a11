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

// JSON dump/load for LevelConfig. Layout rows use '#' for walls and '.' for
// free cells; objects and spawn are listed separately.

#include <cmath>
#include <string>

#include "gridlab/error.hpp"
#include "gridlab/gridworld.hpp"
#include "json.hpp"

namespace gridlab {

inline nlohmann::ordered_json level_to_json(const LevelConfig& level) {
  nlohmann::ordered_json j;
  j["variant"] = std::string(to_string(level.variant));
  j["level_id"] = level.level_id;
  j["flip_prob"] = level.flip_prob;
  j["size"] = level.size();
  j["layout"] = level.layout.rows();
  auto objects = nlohmann::ordered_json::array();
  for (int i = 0; i < kNumObjects; ++i) {
    nlohmann::ordered_json o;
    o["id"] = i;
    o["row"] = level.object_cells[i].row;
    o["col"] = level.object_cells[i].col;
    o["reward"] = level.object_rewards[i];
    objects.push_back(o);
  }
  j["objects"] = objects;
  j["spawn"] = {{"row", level.default_spawn.row}, {"col", level.default_spawn.col}};
  return j;
}

inline LevelConfig level_from_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  LevelConfig level;
  try {
    auto variant = parse_variant(j.at("variant").get<std::string>());
    if (!variant) errors.push_back("level: unknown variant");
    else level.variant = *variant;
    level.level_id = j.at("level_id").get<std::uint64_t>();
    level.flip_prob = j.at("flip_prob").get<double>();
    auto rows = j.at("layout").get<std::vector<std::string>>();
    const int n = int(rows.size());
    level.layout = Layout(n);
    for (int r = 0; r < n; ++r) {
      if (int(rows[r].size()) != n) {
        errors.push_back("level: layout must be square");
        break;
      }
      for (int c = 0; c < n; ++c) level.layout.set_wall({r, c}, rows[r][c] == '#');
    }
    const auto& objects = j.at("objects");
    if (!objects.is_array() || objects.size() != std::size_t(kNumObjects)) {
      errors.push_back("level: expected 5 objects");
    } else {
      for (const auto& o : objects) {
        int id = o.at("id").get<int>();
        if (id < 0 || id >= kNumObjects) {
          errors.push_back("level: object id out of range");
          continue;
        }
        level.object_cells[id] = {o.at("row").get<int>(), o.at("col").get<int>()};
        level.object_rewards[id] = o.at("reward").get<double>();
      }
    }
    level.default_spawn = {j.at("spawn").at("row").get<int>(),
                           j.at("spawn").at("col").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    errors.push_back(std::string("level: ") + e.what());
  }
  if (errors.empty()) {
    auto check_free = [&](Cell c, const std::string& what) {
      if (!level.layout.in_bounds(c) || level.layout.wall(c))
        errors.push_back("level: " + what + " is not on a free cell");
    };
    for (int i = 0; i < kNumObjects; ++i)
      check_free(level.object_cells[i], "object " + std::to_string(i));
    check_free(level.default_spawn, "spawn");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return level;
}

}  // namespace gridlab
