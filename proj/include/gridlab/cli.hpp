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

// The gridlab command-line tool. Lives in a header so tests can drive it
// in-process through run().

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "gridlab/a3c.hpp"
#include "gridlab/checkpoint.hpp"
#include "gridlab/config.hpp"
#include "gridlab/evaluation.hpp"
#include "gridlab/level_io.hpp"
#include "gridlab/study.hpp"
#include "gridlab/trajviz.hpp"
#include "json.hpp"

#ifndef GRIDLAB_VERSION
#define GRIDLAB_VERSION "unknown"
#endif

namespace gridlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Hardware threads, capped by GRIDLAB_THREADS when set.
inline unsigned thread_budget() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GRIDLAB_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1)
      throw ConfigError({"GRIDLAB_THREADS must be a positive integer"});
    n = std::min(n, unsigned(cap));
  }
  return n;
}

inline std::string format_reward(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", std::abs(r) < 5e-11 ? 0.0 : r);
  return buf;
}

struct Context {
  std::vector<std::string> argv;
  std::ostream& out;
  std::ostream& err;
};

/// Writes the reproducibility manifest of one invocation. Directory outputs
/// get dir/manifest.json, file outputs get <file>.manifest.json.
inline void write_manifest(const Context& ctx, const std::string& command, const fs::path& out,
                           ojson extra) {
  ojson m;
  m["tool"] = "gridlab";
  m["version"] = GRIDLAB_VERSION;
  m["schema_version"] = kSchemaVersion;
  m["command"] = command;
  m["argv"] = ctx.argv;
  for (auto& [k, v] : extra.items()) m[k] = v;
  const bool is_dir = fs::is_directory(out);
  write_text(is_dir ? out / "manifest.json" : fs::path(out.string() + ".manifest.json"),
             m.dump(2) + "\n");
}

inline MazeVariant variant_arg(const std::string& s) {
  auto v = parse_variant(s);
  if (!v) throw ConfigError({"unknown variant \"" + s + "\" (basic, blocks, tunnel)"});
  return *v;
}

/// Shared wrapper flags. Unset flags leave the configured value alone.
struct WrapperFlags {
  std::optional<double> zeta;
  std::optional<std::string> mode;
  bool random_spawn = false;

  void add(CLI::App* app) {
    app->add_option("--sticky-zeta", zeta, "sticky-action probability");
    app->add_option("--sticky-mode", mode, "default | alternative");
    app->add_flag("--random-spawn", random_spawn, "spawn at a uniformly random free cell");
  }

  void apply(WrapperConfig& w) const {
    std::vector<std::string> errors;
    if (mode && !parse_sticky_mode(*mode))
      errors.push_back("--sticky-mode must be default or alternative");
    if (zeta && !(*zeta >= 0.0 && *zeta <= 1.0)) errors.push_back("--sticky-zeta must lie in [0, 1]");
    if (mode && !zeta && !w.sticky) errors.push_back("--sticky-mode requires --sticky-zeta");
    if (!errors.empty()) throw ConfigError(std::move(errors));
    if (zeta) {
      StickySettings s = w.sticky.value_or(StickySettings{});
      s.zeta = *zeta;
      w.sticky = s;
    }
    if (mode && w.sticky) w.sticky->mode = *parse_sticky_mode(*mode);
    if (random_spawn) w.random_spawn = true;
  }
};

struct RunFlags {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool deterministic = false;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "master seed");
    app->add_option("--workers", workers, "asynchronous training workers");
    app->add_flag("--deterministic", deterministic, "single worker, bit-reproducible");
  }

  void apply(ExperimentConfig& c) const {
    if (seed) c.seed = *seed;
    if (workers) c.train.workers = *workers;
    if (deterministic) {
      c.train.deterministic = true;
      c.train.workers = 1;
    }
    auto v = c.train.violations();
    if (!v.empty()) throw ConfigError(v);
  }
};

inline LevelConfig load_level_file(const fs::path& path) {
  try {
    return level_from_json(read_json(path));
  } catch (const Error& e) {
    throw ConfigError({e.what()});
  }
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_gen(const Context& ctx, const std::string& variant, std::uint64_t id, int count,
                   double flip, const std::optional<fs::path>& out) {
  std::vector<std::string> errors;
  if (count < 1) errors.push_back("--count must be positive");
  if (!(flip >= 0.0 && flip <= 1.0)) errors.push_back("--flip-prob must lie in [0, 1]");
  if (!parse_variant(variant)) errors.push_back("unknown variant \"" + variant + "\"");
  if (!errors.empty()) throw ConfigError(errors);
  const auto v = variant_arg(variant);
  std::string text;
  for (int i = 0; i < count; ++i) {
    const auto j = level_to_json(generate_level(v, id + std::uint64_t(i), flip));
    text += count == 1 ? j.dump(2) : j.dump();
    text += '\n';
  }
  if (!out) {
    ctx.out << text;
    return kExitOk;
  }
  write_text(*out, text);
  write_manifest(ctx, "gen", *out,
                 {{"variant", variant}, {"level_id", id}, {"count", count}, {"flip_prob", flip}});
  return kExitOk;
}

inline int cmd_oracle(const Context& ctx, const std::optional<fs::path>& level_path,
                      const std::string& variant, std::uint64_t id, double flip, bool verbose) {
  const LevelConfig level =
      level_path ? load_level_file(*level_path) : generate_level(variant_arg(variant), id, flip);
  const auto res = oracle_optimal_reward(level);
  ctx.out << format_reward(res.reward) << '\n';
  if (verbose) {
    std::string w;
    for (auto a : res.witness) w += action_glyph(a);
    ctx.out << "steps " << res.witness.size() << "\nactions " << w << '\n';
  }
  return kExitOk;
}

inline ojson curve_summary(const TrainResult& r) {
  ojson m;
  m["steps"] = r.steps;
  m["seconds"] = r.seconds;
  m["updates_applied"] = r.updates_applied;
  m["updates_rejected"] = r.updates_rejected;
  m["train_episodes"] = r.curve.train.size();
  m["test_episodes"] = r.curve.test.size();
  auto num = [](double x) { return std::isnan(x) ? ojson(nullptr) : ojson(x); };
  m["final_train"] = num(r.final_train());
  m["final_test"] = num(r.final_test());
  return m;
}

inline int cmd_train(const Context& ctx, const fs::path& config_path, const fs::path& out,
                     const RunFlags& rf, const WrapperFlags& wf, std::optional<std::int64_t> steps,
                     std::optional<fs::path> resume) {
  auto cfg = load_config(config_path);
  wf.apply(cfg.train.wrappers);
  if (steps) cfg.train.max_steps = *steps;
  rf.apply(cfg);
  TrainConfig tc = cfg.train;
  tc.run_seed = derive_seed(cfg.seed, stream_tag::kWorker, 0);
  tc.checkpoint_dir = out / "checkpoint";
  tc.resume_from = resume;
  fs::create_directories(out);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");

  auto last = std::chrono::steady_clock::now();
  auto res = train(tc, [&](const TrainProgress& p) {
    const auto now = std::chrono::steady_clock::now();
    if (now - last < std::chrono::seconds(10) && p.steps < p.max_steps) return;
    last = now;
    char buf[128];
    std::snprintf(buf, sizeof buf, "step %lld/%lld train %.3f test %.3f\n", (long long)p.steps,
                  (long long)p.max_steps, p.train_reward, p.test_reward);
    ctx.err << buf << std::flush;
  });
  write_curve_csv(out / "curve.csv", res.curve);
  auto metrics = curve_summary(res);
  if (!res.checkpoints.empty())
    metrics["checkpoint"] = fs::relative(res.checkpoints.back(), out).string();
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  write_manifest(ctx, "train", out,
                 {{"config_hash", config_hash(cfg)},
                  {"seed", cfg.seed},
                  {"run_seed", tc.run_seed},
                  {"pool_seed", tc.pool_seed},
                  {"deterministic", tc.deterministic}});
  ctx.out << metrics.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_study(const Context& ctx, const fs::path& config_path, const fs::path& out,
                     const RunFlags& rf, bool full) {
  auto cfg = load_config(config_path);
  rf.apply(cfg);
  if (!cfg.study && !full) throw ConfigError({"study config needs a \"study\" block (or --full)"});
  fs::create_directories(out);
  StudyOptions opt;
  opt.full = full;
  opt.eval_threads = thread_budget();
  opt.log = [&](const std::string& s) { ctx.err << s << '\n' << std::flush; };
  const auto runs = run_study(cfg, out, opt);
  write_manifest(ctx, "study", out,
                 {{"config_hash", config_hash(cfg)},
                  {"seed", cfg.seed},
                  {"full", full},
                  {"runs", runs.size()}});
  int failed = 0;
  for (const auto& r : runs)
    if (read_json(run_dir(out, r) / "metrics.json").value("status", "") != "ok") ++failed;
  ctx.out << runs.size() - std::size_t(failed) << " runs ok, " << failed << " failed\n";
  return kExitOk;
}

inline int cmd_eval(const Context& ctx, const fs::path& ck_path, const std::string& protocol_text,
                    std::uint64_t seed, const std::optional<fs::path>& out, bool with_rewards) {
  const auto protocol = parse_protocol(protocol_text);
  const auto ck = load_checkpoint(ck_path);
  const auto pools = checkpoint_pools(ck);
  const unsigned threads = thread_budget();
  const auto levels = protocol_pool(pools, protocol).instantiate(threads);
  PolicyValueNet<float> net(ck.arch, ck.grid, ck.params);
  const auto rep = evaluate(net, levels, protocol, seed, threads);
  const std::string text = to_json(rep, with_rewards).dump(2) + "\n";
  ctx.out << text;
  if (out) {
    write_text(*out, text);
    write_manifest(ctx, "eval", *out,
                   {{"checkpoint", ck_path.string()}, {"seed", seed}, {"protocol", to_json(protocol)}});
  }
  return kExitOk;
}

inline int cmd_tables(const Context& ctx, const fs::path& study, std::optional<fs::path> out,
                      std::optional<int> top_k) {
  int k = 3;
  if (fs::exists(study / "study.json")) {
    const auto j = read_json(study / "study.json");
    if (j.contains("study")) k = j["study"].value("top_k", 3);
  }
  if (top_k) k = *top_k;
  if (k < 1) throw ConfigError({"--top-k must be positive"});
  const fs::path dir = out.value_or(study);
  const auto rows = make_tables(study, dir, k);
  make_bars(study, dir, k);
  std::ifstream in(dir / "tables.csv");
  ctx.out << in.rdbuf();
  int missing = 0;
  for (const auto& r : rows) missing += r.status == "missing";
  if (missing) ctx.err << missing << " cell(s) missing: no successful runs\n";
  write_manifest(ctx, "tables", dir, {{"study", study.string()}, {"top_k", k}});
  return kExitOk;
}

inline int cmd_sweep(const Context& ctx, const std::vector<fs::path>& cks, std::vector<double> zetas,
                     int episodes, std::uint64_t seed, const std::optional<fs::path>& out) {
  std::vector<std::string> errors;
  for (double z : zetas)
    if (!(z >= 0.0 && z <= 1.0)) errors.push_back("--zetas entries must lie in [0, 1]");
  if (episodes < 1) errors.push_back("--episodes must be positive");
  if (!errors.empty()) throw ConfigError(errors);
  const auto pts = sticky_sweep(cks, zetas, episodes, seed, thread_budget());
  const std::string csv = sweep_csv(pts);
  ctx.out << csv;
  if (out) {
    write_text(*out, csv);
    write_manifest(ctx, "sweep", *out, {{"seed", seed}, {"episodes", episodes}, {"zetas", zetas}});
  }
  return kExitOk;
}

inline int cmd_viz(const Context& ctx, const fs::path& ck_path, std::uint64_t level_id,
                   const WrapperFlags& wf, std::uint64_t seed, bool greedy, const fs::path& out) {
  const auto ck = load_checkpoint(ck_path);
  const auto pools = checkpoint_pools(ck);
  const auto& ids = pools.train.ids;
  const bool in_train = std::find(ids.begin(), ids.end(), level_id) != ids.end();
  const auto level = std::make_shared<const LevelConfig>(
      generate_level(pools.train.variant, level_id, in_train ? pools.train.flip_prob : 0.0));
  if (level->size() != ck.grid) throw ConfigError({"level size does not match the checkpoint"});
  WrapperConfig w{std::nullopt, false, Stage::kEvaluation};
  wf.apply(w);
  PolicyValueNet<float> net(ck.arch, ck.grid, ck.params);
  const auto trace =
      wrap_episode(level, NetworkAgent{&net, greedy, {}}, w, derive_seed(seed, stream_tag::kEpisode, 0));
  write_text(out, render_svg(trace));
  fs::path stem = out;
  stem.replace_extension();
  write_text(stem.string() + ".jsonl", trace_jsonl(trace));
  write_text(stem.string() + ".txt", render_text(trace));
  write_manifest(ctx, "viz", out,
                 {{"checkpoint", ck_path.string()},
                  {"level_id", level_id},
                  {"training_level", in_train},
                  {"seed", seed}});
  ctx.out << render_text(trace) << "\nepisode reward " << format_reward(trace.episode_reward)
          << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  Context ctx{std::vector<std::string>(argv, argv + argc), out, err};
  CLI::App app{"Procedural gridworld generalization and memorization experiments", "gridlab"};
  app.set_version_flag("--version", GRIDLAB_VERSION);
  app.require_subcommand(1);

  std::string variant = "basic";
  std::uint64_t level_id = 0;
  int count = 1;
  double flip = 0.0;
  std::optional<fs::path> out_file;
  auto* gen = app.add_subcommand("gen", "generate level JSON");
  gen->add_option("--variant", variant, "basic | blocks | tunnel");
  gen->add_option("--level-id", level_id, "first level id");
  gen->add_option("--count", count, "levels to emit; more than one switches to JSON lines");
  gen->add_option("--flip-prob", flip, "reward flip probability");
  gen->add_option("--out", out_file, "output file (default: stdout)");

  std::optional<fs::path> level_path;
  bool verbose = false;
  auto* oracle = app.add_subcommand("oracle", "print the maximum achievable episode reward");
  oracle->add_option("--level", level_path, "level JSON written by gen")->check(CLI::ExistingFile);
  oracle->add_option("--variant", variant, "basic | blocks | tunnel");
  oracle->add_option("--level-id", level_id, "level id");
  oracle->add_option("--flip-prob", flip, "reward flip probability");
  oracle->add_flag("--verbose", verbose, "also print an optimal action sequence");

  fs::path config_path, out_dir;
  RunFlags rf;
  WrapperFlags wf;
  std::optional<std::int64_t> steps;
  std::optional<fs::path> resume;
  auto* tr = app.add_subcommand("train", "train one agent");
  tr->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--max-steps", steps, "override train.max_steps");
  tr->add_option("--resume", resume, "checkpoint manifest to resume from")->check(CLI::ExistingFile);
  rf.add(tr);
  wf.add(tr);

  bool full = false;
  auto* st = app.add_subcommand("study", "train and evaluate a grid of runs");
  st->add_option("--config", config_path, "experiment JSON with a study block")
      ->required()
      ->check(CLI::ExistingFile);
  st->add_option("--out", out_dir, "study directory")->required();
  st->add_flag("--full", full, "the full variant x size x flip x family grid");
  rf.add(st);

  fs::path ck_path;
  std::string protocol_text = "{}";
  std::uint64_t seed = 0;
  bool with_rewards = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint under a protocol");
  ev->add_option("--checkpoint", ck_path, "checkpoint manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--protocol", protocol_text, "protocol JSON");
  ev->add_option("--seed", seed, "evaluation seed");
  ev->add_option("--out", out_file, "also write the report here");
  ev->add_flag("--rewards", with_rewards, "include per-episode rewards");

  fs::path study_dir;
  std::optional<fs::path> tables_out;
  std::optional<int> top_k;
  auto* tb = app.add_subcommand("tables", "summarize a study into tables and bar series");
  tb->add_option("--study", study_dir, "study directory")->required()->check(CLI::ExistingDirectory);
  tb->add_option("--out", tables_out, "output directory (default: the study directory)");
  tb->add_option("--top-k", top_k, "runs averaged per cell (default: from the study)");

  std::vector<fs::path> cks;
  std::vector<double> zetas = {0.0, 0.25, 0.5, 0.75, 0.99};
  int episodes = kDefaultEvalEpisodes;
  auto* sw = app.add_subcommand("sweep", "evaluate checkpoints over a stickiness grid");
  sw->add_option("--checkpoint", cks, "checkpoint manifests")->required()->check(CLI::ExistingFile);
  sw->add_option("--zetas", zetas, "stickiness values")->delimiter(',');
  sw->add_option("--episodes", episodes, "episodes per point");
  sw->add_option("--seed", seed, "evaluation seed");
  sw->add_option("--out", out_file, "CSV output file");

  fs::path viz_out;
  bool greedy = false;
  auto* vz = app.add_subcommand("viz", "record and render one episode");
  vz->add_option("--checkpoint", ck_path, "checkpoint manifest")->required()->check(CLI::ExistingFile);
  vz->add_option("--level-id", level_id, "level id")->required();
  vz->add_option("--seed", seed, "episode seed");
  vz->add_flag("--greedy", greedy, "argmax actions");
  vz->add_option("--out", viz_out, "SVG output; .jsonl and .txt are written next to it")->required();
  wf.add(vz);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen(ctx, variant, level_id, count, flip, out_file);
    if (*oracle) return cmd_oracle(ctx, level_path, variant, level_id, flip, verbose);
    if (*tr) return cmd_train(ctx, config_path, out_dir, rf, wf, steps, resume);
    if (*st) return cmd_study(ctx, config_path, out_dir, rf, full);
    if (*ev) return cmd_eval(ctx, ck_path, protocol_text, seed, out_file, with_rewards);
    if (*tb) return cmd_tables(ctx, study_dir, tables_out, top_k);
    if (*sw) return cmd_sweep(ctx, cks, zetas, episodes, seed, out_file);
    if (*vz) return cmd_viz(ctx, ck_path, level_id, wf, seed, greedy, viz_out);
  } catch (const ConfigError& e) {
    ojson j{{"error", "config"}, {"violations", e.violations()}};
    err << j.dump(2) << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    ojson j{{"error", "runtime"}, {"message", e.what()}};
    err << j.dump(2) << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace gridlab::cli
