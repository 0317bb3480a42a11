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

// Experiment configuration files. Every object rejects unknown keys, and
// parsing reports every violation found rather than stopping at the first.
// Serialization writes every field, so parse(serialize(c)) reproduces c.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gridlab/a3c.hpp"
#include "gridlab/error.hpp"
#include "gridlab/evaluation.hpp"
#include "json.hpp"

namespace gridlab {

inline constexpr int kSchemaVersion = 1;

using ojson = nlohmann::ordered_json;

struct StudyConfig {
  std::vector<MazeVariant> variants = {MazeVariant::kBasic};
  std::vector<int> n_levels = {10, 100};
  std::vector<double> flip_probs = {0.0};
  std::vector<Family> families = {Family::kConvNet};
  int runs_per_cell = 3;
  int top_k = 3;
  bool sample_hyperparams = false;  // false: arch/lr/entropy from the train block
  std::vector<EvalProtocol> protocols;

  // The full grid, used when `full` is set.
  static StudyConfig full_grid() {
    StudyConfig s;
    s.variants = {MazeVariant::kBasic, MazeVariant::kBlocks, MazeVariant::kTunnel};
    s.n_levels = {10, 100, 1000, 10000};
    s.flip_probs = {0.0, 0.2, 0.4, 0.5};
    s.families = {Family::kMlp, Family::kConvNet, Family::kBigConvNet};
    s.runs_per_cell = 20;
    s.top_k = 3;
    s.sample_hyperparams = true;
    return s;
  }
};

/// Evaluation protocols run on every finished study run unless configured:
/// plain train/test plus the three train-pool stochastic protocols.
inline std::vector<EvalProtocol> default_protocols(int episodes = kDefaultEvalEpisodes) {
  const StickySettings sticky{0.25, StickyMode::kDefault};
  return {
      {PoolKind::kTrain, std::nullopt, false, episodes, false},
      {PoolKind::kTest, std::nullopt, false, episodes, false},
      {PoolKind::kTrain, sticky, false, episodes, false},
      {PoolKind::kTrain, std::nullopt, true, episodes, false},
      {PoolKind::kTrain, sticky, true, episodes, false},
  };
}

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  TrainConfig train;
  std::optional<StudyConfig> study;
};

namespace detail {

/// Reads fields of one JSON object, recording type errors and unknown keys.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) error("must be an object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
      return true;
    } catch (const nlohmann::json::exception&) {
      error(std::string(key) + " has the wrong type");
      return false;
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  void error(const std::string& msg) {
    errors_.push_back((path_.empty() ? "" : path_ + ": ") + msg);
  }

  std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  // Call once all keys were requested.
  void reject_unknown() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) error("unknown key \"" + k + "\"");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

inline std::optional<StickySettings> read_sticky(const nlohmann::json& j, const std::string& path,
                                                 std::vector<std::string>& errors) {
  if (j.is_null()) return std::nullopt;
  FieldReader r(j, path, errors);
  StickySettings s;
  if (!r.get("zeta", s.zeta)) r.error("zeta is required");
  std::string mode = "default";
  r.get("mode", mode);
  if (auto m = parse_sticky_mode(mode))
    s.mode = *m;
  else
    r.error("mode must be \"default\" or \"alternative\"");
  if (!(s.zeta >= 0.0 && s.zeta <= 1.0)) r.error("zeta must lie in [0, 1]");
  r.reject_unknown();
  return s;
}

inline ojson sticky_json(const std::optional<StickySettings>& s) {
  if (!s) return nullptr;
  return {{"zeta", s->zeta}, {"mode", std::string(to_string(s->mode))}};
}

}  // namespace detail

inline ojson to_json(const EvalProtocol& p) {
  ojson j;
  j["pool"] = std::string(to_string(p.pool));
  j["sticky"] = detail::sticky_json(p.sticky);
  j["random_spawn"] = p.random_spawn;
  j["episodes"] = p.episodes;
  j["greedy"] = p.greedy;
  return j;
}

inline EvalProtocol protocol_from_json(const nlohmann::json& j, const std::string& path,
                                       std::vector<std::string>& errors) {
  detail::FieldReader r(j, path, errors);
  EvalProtocol p;
  std::string pool = "test";
  r.get("pool", pool);
  if (pool == "train")
    p.pool = PoolKind::kTrain;
  else if (pool != "test")
    r.error("pool must be \"train\" or \"test\"");
  if (auto* s = r.child("sticky")) p.sticky = detail::read_sticky(*s, r.path("sticky"), errors);
  r.get("random_spawn", p.random_spawn);
  r.get("episodes", p.episodes);
  r.get("greedy", p.greedy);
  if (p.episodes < 1) r.error("episodes must be at least 1");
  r.reject_unknown();
  return p;
}

inline EvalProtocol parse_protocol(const std::string& text) {
  std::vector<std::string> errors;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({std::string("protocol is not valid JSON: ") + e.what()});
  }
  auto p = protocol_from_json(j, "protocol", errors);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return p;
}

inline ojson to_json(const TrainConfig& c) {
  ojson j;
  j["variant"] = std::string(to_string(c.variant));
  j["n_train_levels"] = c.n_train_levels;
  j["n_test_levels"] = c.n_test_levels;
  j["flip_prob"] = c.flip_prob;
  j["unroll_length"] = c.unroll_length;
  j["reward_clip"] = c.reward_clip;
  j["gamma"] = c.gamma;
  j["entropy_coef"] = c.entropy_coef;
  j["learning_rate"] = c.learning_rate;
  j["anneal_learning_rate"] = c.anneal_learning_rate;
  j["value_coef"] = c.value_coef;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["max_steps"] = c.max_steps;
  j["arch"] = c.arch.name();
  j["workers"] = c.workers;
  j["deterministic"] = c.deterministic;
  j["test_interval_steps"] = c.test_interval_steps;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["pool_seed"] = c.pool_seed;
  j["sticky"] = detail::sticky_json(c.wrappers.sticky);
  j["random_spawn"] = c.wrappers.random_spawn;
  return j;
}

/// Fields absent from `j` keep their values from `base`.
inline TrainConfig train_from_json(const nlohmann::json& j, const std::string& path,
                                   std::vector<std::string>& errors, TrainConfig base = {}) {
  detail::FieldReader r(j, path, errors);
  TrainConfig c = std::move(base);
  std::string s;
  if (r.get("variant", s)) {
    if (auto v = parse_variant(s))
      c.variant = *v;
    else
      r.error("unknown variant \"" + s + "\"");
  }
  r.get("n_train_levels", c.n_train_levels);
  r.get("n_test_levels", c.n_test_levels);
  r.get("flip_prob", c.flip_prob);
  r.get("unroll_length", c.unroll_length);
  r.get("reward_clip", c.reward_clip);
  r.get("gamma", c.gamma);
  r.get("entropy_coef", c.entropy_coef);
  r.get("learning_rate", c.learning_rate);
  r.get("anneal_learning_rate", c.anneal_learning_rate);
  r.get("value_coef", c.value_coef);
  r.get("grad_clip_norm", c.grad_clip_norm);
  r.get("max_steps", c.max_steps);
  if (r.get("arch", s)) {
    if (auto a = parse_arch(s))
      c.arch = *a;
    else
      r.error("unknown arch \"" + s + "\"");
  }
  r.get("workers", c.workers);
  r.get("deterministic", c.deterministic);
  r.get("test_interval_steps", c.test_interval_steps);
  r.get("checkpoint_interval", c.checkpoint_interval);
  r.get("pool_seed", c.pool_seed);
  if (auto* st = r.child("sticky")) c.wrappers.sticky = detail::read_sticky(*st, r.path("sticky"), errors);
  r.get("random_spawn", c.wrappers.random_spawn);
  r.reject_unknown();
  for (auto& v : c.violations()) {
    // sticky zeta is already reported by read_sticky
    if (v.find("zeta") == std::string::npos) r.error(v);
  }
  return c;
}

inline ojson to_json(const StudyConfig& s) {
  ojson j;
  auto variants = ojson::array();
  for (auto v : s.variants) variants.push_back(std::string(to_string(v)));
  j["variants"] = variants;
  j["n_levels"] = s.n_levels;
  j["flip_probs"] = s.flip_probs;
  auto fams = ojson::array();
  for (auto f : s.families) fams.push_back(std::string(to_string(f)));
  j["families"] = fams;
  j["runs_per_cell"] = s.runs_per_cell;
  j["top_k"] = s.top_k;
  j["sample_hyperparams"] = s.sample_hyperparams;
  auto protos = ojson::array();
  for (const auto& p : s.protocols) protos.push_back(to_json(p));
  j["protocols"] = protos;
  return j;
}

inline StudyConfig study_from_json(const nlohmann::json& j, const std::string& path,
                                   std::vector<std::string>& errors) {
  detail::FieldReader r(j, path, errors);
  StudyConfig s;
  std::vector<std::string> names;
  if (r.get("variants", names)) {
    s.variants.clear();
    for (const auto& n : names) {
      if (auto v = parse_variant(n))
        s.variants.push_back(*v);
      else
        r.error("unknown variant \"" + n + "\"");
    }
  }
  r.get("n_levels", s.n_levels);
  r.get("flip_probs", s.flip_probs);
  if (r.get("families", names)) {
    s.families.clear();
    for (const auto& n : names) {
      if (auto f = parse_family(n))
        s.families.push_back(*f);
      else
        r.error("unknown family \"" + n + "\"");
    }
  }
  r.get("runs_per_cell", s.runs_per_cell);
  r.get("top_k", s.top_k);
  r.get("sample_hyperparams", s.sample_hyperparams);
  if (auto* p = r.child("protocols")) {
    if (!p->is_array()) {
      r.error("protocols must be an array");
    } else {
      for (std::size_t i = 0; i < p->size(); ++i)
        s.protocols.push_back(
            protocol_from_json((*p)[i], r.path("protocols") + "[" + std::to_string(i) + "]",
                               errors));
    }
  } else {
    s.protocols = default_protocols();
  }
  r.reject_unknown();
  if (s.variants.empty()) r.error("variants must not be empty");
  if (s.n_levels.empty()) r.error("n_levels must not be empty");
  for (int n : s.n_levels)
    if (n <= 0) r.error("n_levels entries must be positive");
  if (s.flip_probs.empty()) r.error("flip_probs must not be empty");
  for (double p : s.flip_probs)
    if (!(p >= 0.0 && p <= 1.0)) r.error("flip_probs entries must lie in [0, 1]");
  if (s.families.empty()) r.error("families must not be empty");
  if (s.runs_per_cell < 1) r.error("runs_per_cell must be at least 1");
  if (s.top_k < 1) r.error("top_k must be at least 1");
  if (s.top_k > s.runs_per_cell) r.error("top_k must not exceed runs_per_cell");
  return s;
}

inline ojson to_json(const ExperimentConfig& c) {
  ojson j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["train"] = to_json(c.train);
  if (c.study) j["study"] = to_json(*c.study);
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  detail::FieldReader r(j, "", errors);
  ExperimentConfig c;
  if (!r.get("schema_version", c.schema_version))
    r.error("schema_version is required");
  else if (c.schema_version != kSchemaVersion)
    r.error("unsupported schema_version " + std::to_string(c.schema_version));
  r.get("seed", c.seed);
  if (auto* t = r.child("train")) c.train = train_from_json(*t, "train", errors);
  if (auto* s = r.child("study")) c.study = study_from_json(*s, "study", errors);
  r.reject_unknown();
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config " + path.string()});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({path.string() + " is not valid JSON: " + e.what()});
  }
  return config_from_json(j);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a(to_json(c).dump());
  return os.str();
}

}  // namespace gridlab
