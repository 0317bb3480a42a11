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

// Study orchestration and reports: the training grid over pool size x flip
// probability x family, Table-shaped summaries of top-k runs, bar series per
// evaluation protocol, and stickiness sweeps of trained agents.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gridlab/a3c.hpp"
#include "gridlab/checkpoint.hpp"
#include "gridlab/config.hpp"
#include "gridlab/evaluation.hpp"
#include "json.hpp"

namespace gridlab {

namespace fs = std::filesystem;

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string cell_name(MazeVariant v, int n_levels, double flip_prob, Family f) {
  return std::string(to_string(v)) + "_n" + std::to_string(n_levels) + "_p" +
         format_number(flip_prob) + "_" + std::string(to_string(f));
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw Error("cannot write " + path.string());
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

/// Pools of the run that produced a checkpoint, from its metadata.
inline PoolPair checkpoint_pools(const Checkpoint& ck) {
  const auto& m = ck.meta;
  for (const char* key : {"variant", "pool_seed", "n_train_levels", "n_test_levels", "flip_prob"})
    if (!m.contains(key)) throw Error(std::string("checkpoint metadata lacks ") + key);
  auto variant = parse_variant(m["variant"].get<std::string>());
  if (!variant) throw Error("checkpoint metadata has an unknown variant");
  return split_pools(m["pool_seed"].get<std::uint64_t>(),
                     m["n_train_levels"].get<std::size_t>(), m["n_test_levels"].get<std::size_t>(),
                     *variant, m["flip_prob"].get<double>());
}

// ---------------------------------------------------------------------------
// Study runner

struct RunSpec {
  std::string cell;
  MazeVariant variant;
  int n_levels;
  double flip_prob;
  Family family;
  int run;
  TrainConfig train;
};

struct StudyOptions {
  bool full = false;
  unsigned eval_threads = 1;
  std::function<void(const std::string&)> log;
};

inline std::uint64_t study_pool_seed(std::uint64_t seed, MazeVariant v, int n_levels) {
  return derive_seed(derive_seed(seed, stream_tag::kPools, std::uint64_t(v)), stream_tag::kPools,
                     std::uint64_t(n_levels));
}

/// Expands the grid into runs. Runs of one (variant, n_levels) share their
/// level pools so families and flip probabilities are compared on the same
/// level ids.
inline std::vector<RunSpec> plan_study(const ExperimentConfig& cfg, const StudyConfig& study) {
  std::vector<RunSpec> out;
  std::uint64_t cell_index = 0, run_index = 0;
  for (auto v : study.variants)
    for (int n : study.n_levels)
      for (double p : study.flip_probs)
        for (auto f : study.families) {
          const std::string cell = cell_name(v, n, p, f);
          for (int r = 0; r < study.runs_per_cell; ++r) {
            TrainConfig tc = cfg.train;
            tc.variant = v;
            tc.n_train_levels = n;
            tc.flip_prob = p;
            tc.pool_seed = study_pool_seed(cfg.seed, v, n);
            tc.run_seed = derive_seed(cfg.seed, stream_tag::kWorker, run_index++);
            if (study.sample_hyperparams) {
              auto h = sample_hyperparams(std::uint64_t(r),
                                          derive_seed(cfg.seed, stream_tag::kHyper, cell_index), f);
              tc.arch = h.arch;
              tc.learning_rate = h.learning_rate;
              tc.entropy_coef = h.entropy_coef;
            } else if (tc.arch.family != f) {
              tc.arch = arch_pool(f).front();
            }
            out.push_back({cell, v, n, p, f, r, tc});
          }
          ++cell_index;
        }
  return out;
}

inline fs::path run_dir(const fs::path& study_dir, const RunSpec& r) {
  return study_dir / "runs" / r.cell / ("run_" + std::to_string(r.run));
}

/// Trains and evaluates every run of the grid under `out`. Runs whose
/// metrics.json already reports success are skipped, so an interrupted
/// study can be resumed. A failed run is recorded with its error and the
/// study continues.
inline std::vector<RunSpec> run_study(const ExperimentConfig& cfg, const fs::path& out,
                                      const StudyOptions& opt = {}) {
  StudyConfig study = cfg.study.value_or(StudyConfig{});
  if (opt.full) {
    auto protocols = study.protocols;
    study = StudyConfig::full_grid();
    study.protocols = protocols.empty() ? default_protocols() : protocols;
  }
  if (study.protocols.empty()) study.protocols = default_protocols();
  ExperimentConfig effective = cfg;
  effective.study = study;
  write_text(out / "study.json", to_json(effective).dump(2) + "\n");

  const auto runs = plan_study(cfg, study);
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunSpec& rs = runs[i];
    const fs::path dir = run_dir(out, rs);
    if (fs::exists(dir / "metrics.json") &&
        read_json(dir / "metrics.json").value("status", "") == "ok") {
      log("skip " + rs.cell + " run " + std::to_string(rs.run) + " (done)");
      continue;
    }
    log("run " + std::to_string(i + 1) + "/" + std::to_string(runs.size()) + ": " + rs.cell +
        " run " + std::to_string(rs.run) + " " + rs.train.arch.name());
    ojson m;
    m["cell"] = rs.cell;
    m["variant"] = std::string(to_string(rs.variant));
    m["n_levels"] = rs.n_levels;
    m["flip_prob"] = rs.flip_prob;
    m["family"] = std::string(to_string(rs.family));
    m["run"] = rs.run;
    m["arch"] = rs.train.arch.name();
    m["learning_rate"] = rs.train.learning_rate;
    m["entropy_coef"] = rs.train.entropy_coef;
    m["run_seed"] = rs.train.run_seed;
    m["pool_seed"] = rs.train.pool_seed;
    try {
      TrainConfig tc = rs.train;
      tc.checkpoint_dir = dir / "checkpoint";
      auto res = train(tc);
      write_curve_csv(dir / "curve.csv", res.curve);
      m["status"] = "ok";
      m["steps"] = res.steps;
      m["seconds"] = res.seconds;
      m["final_train"] = res.final_train();
      m["final_test"] = res.final_test();
      m["checkpoint"] = res.checkpoints.empty()
                            ? std::string()
                            : fs::relative(res.checkpoints.back(), dir).string();
      const auto pools = split_pools(tc.pool_seed, std::size_t(tc.n_train_levels),
                                     std::size_t(tc.n_test_levels), tc.variant, tc.flip_prob);
      const auto train_levels = pools.train.instantiate(opt.eval_threads);
      const auto test_levels = pools.test.instantiate(opt.eval_threads);
      PolicyValueNet<float> net(tc.arch, grid_size(tc.variant), res.params);
      ojson evals = ojson::object();
      for (std::size_t k = 0; k < study.protocols.size(); ++k) {
        const auto& p = study.protocols[k];
        const auto& levels = p.pool == PoolKind::kTrain ? train_levels : test_levels;
        auto rep = evaluate(net, levels, p, derive_seed(tc.run_seed, stream_tag::kEpisode, k),
                            opt.eval_threads);
        evals[p.name()] = rep.mean;
      }
      m["evals"] = evals;
    } catch (const std::exception& e) {
      m["status"] = "failed";
      m["error"] = e.what();
      log("  failed: " + std::string(e.what()));
    }
    write_text(dir / "metrics.json", m.dump(2) + "\n");
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Reports

struct RunMetrics {
  std::string cell;
  std::string variant;
  int n_levels = 0;
  double flip_prob = 0.0;
  std::string family;
  int run = 0;
  bool ok = false;
  double final_train = 0.0;
  double final_test = 0.0;
  std::map<std::string, double> evals;
};

inline std::vector<RunMetrics> load_run_metrics(const fs::path& study_dir) {
  std::vector<RunMetrics> out;
  const fs::path runs = study_dir / "runs";
  if (!fs::exists(runs)) throw Error(study_dir.string() + " has no runs/ directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(runs))
    if (e.path().filename() == "metrics.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto j = read_json(f);
    RunMetrics m;
    m.cell = j.at("cell").get<std::string>();
    m.variant = j.at("variant").get<std::string>();
    m.n_levels = j.at("n_levels").get<int>();
    m.flip_prob = j.at("flip_prob").get<double>();
    m.family = j.at("family").get<std::string>();
    m.run = j.at("run").get<int>();
    m.ok = j.value("status", "") == "ok";
    if (m.ok) {
      m.final_train = j.at("final_train").is_number() ? j["final_train"].get<double>() : std::nan("");
      m.final_test = j.at("final_test").is_number() ? j["final_test"].get<double>() : std::nan("");
      if (j.contains("evals"))
        for (const auto& [k, v] : j["evals"].items()) m.evals[k] = v.get<double>();
    }
    out.push_back(std::move(m));
  }
  return out;
}

struct TableRow {
  std::string variant;
  int n_levels = 0;
  double flip_prob = 0.0;
  std::string family;
  int runs_ok = 0;
  int runs_failed = 0;
  std::vector<int> selected;  // run ids of the top-k
  double train = std::nan("");
  double test = std::nan("");
  std::map<std::string, double> evals;  // top-k averages per protocol
  std::string status;  // "ok", "partial" (fewer than k runs) or "missing"
};

/// Groups runs by cell, keeps the top-k by end-of-training reward and
/// averages their metrics.
inline std::vector<TableRow> summarize(const std::vector<RunMetrics>& runs, int top_k) {
  std::map<std::string, std::vector<const RunMetrics*>> cells;
  std::vector<std::string> order;
  for (const auto& r : runs) {
    if (!cells.contains(r.cell)) order.push_back(r.cell);
    cells[r.cell].push_back(&r);
  }
  std::vector<TableRow> out;
  for (const auto& name : order) {
    const auto& rs = cells[name];
    TableRow row;
    row.variant = rs.front()->variant;
    row.n_levels = rs.front()->n_levels;
    row.flip_prob = rs.front()->flip_prob;
    row.family = rs.front()->family;
    std::vector<const RunMetrics*> ok;
    for (const auto* r : rs) {
      if (r->ok)
        ok.push_back(r);
      else
        ++row.runs_failed;
    }
    std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->run < b->run; });
    row.runs_ok = int(ok.size());
    if (ok.empty()) {
      row.status = "missing";
      out.push_back(row);
      continue;
    }
    std::vector<double> metric;
    for (const auto* r : ok) metric.push_back(r->final_train);
    const std::size_t k = std::min<std::size_t>(std::size_t(top_k), ok.size());
    row.status = k < std::size_t(top_k) ? "partial" : "ok";
    const auto sel = top_k_select(metric, k);
    double tr = 0.0, te = 0.0;
    std::map<std::string, int> counts;
    for (auto i : sel) {
      row.selected.push_back(ok[i]->run);
      tr += ok[i]->final_train;
      te += ok[i]->final_test;
      for (const auto& [p, v] : ok[i]->evals) {
        row.evals[p] += v;
        ++counts[p];
      }
    }
    row.train = tr / double(k);
    row.test = te / double(k);
    for (auto& [p, v] : row.evals) v /= counts[p];
    out.push_back(row);
  }
  return out;
}

inline std::string csv_number(double x) { return std::isnan(x) ? "" : format_number(x); }

/// Writes tables.csv (one row per cell) and, per variant, a Table-2-shaped
/// pair of files table_<variant>_{training,testing}.csv with one row per
/// pool size and one column per flip probability; each entry lists the
/// families' top-k averages separated by '/'. Returns the rows.
inline std::vector<TableRow> make_tables(const fs::path& study_dir, const fs::path& out_dir,
                                         int top_k = 3) {
  const auto rows = summarize(load_run_metrics(study_dir), top_k);
  std::ostringstream os;
  os << "variant,n_levels,flip_prob,family,runs_ok,runs_failed,top_k,selected,training,testing,"
        "status\n";
  for (const auto& r : rows) {
    std::string sel;
    for (int s : r.selected) sel += (sel.empty() ? "" : " ") + std::to_string(s);
    os << r.variant << ',' << r.n_levels << ',' << format_number(r.flip_prob) << ',' << r.family
       << ',' << r.runs_ok << ',' << r.runs_failed << ',' << top_k << ',' << sel << ','
       << csv_number(r.train) << ',' << csv_number(r.test) << ',' << r.status << '\n';
  }
  write_text(out_dir / "tables.csv", os.str());

  std::map<std::string, std::vector<const TableRow*>> by_variant;
  for (const auto& r : rows) by_variant[r.variant].push_back(&r);
  for (const auto& [variant, vr] : by_variant) {
    std::vector<int> ns;
    std::vector<double> ps;
    std::vector<std::string> fams;
    for (const auto* r : vr) {
      if (std::find(ns.begin(), ns.end(), r->n_levels) == ns.end()) ns.push_back(r->n_levels);
      if (std::find(ps.begin(), ps.end(), r->flip_prob) == ps.end()) ps.push_back(r->flip_prob);
      if (std::find(fams.begin(), fams.end(), r->family) == fams.end()) fams.push_back(r->family);
    }
    std::sort(ns.begin(), ns.end());
    std::sort(ps.begin(), ps.end());
    for (const char* block : {"training", "testing"}) {
      std::ostringstream t;
      t << "n_levels";
      for (double p : ps) t << ",p=" << format_number(p);
      t << '\n';
      for (int n : ns) {
        t << n;
        for (double p : ps) {
          t << ',';
          for (std::size_t fi = 0; fi < fams.size(); ++fi) {
            const TableRow* hit = nullptr;
            for (const auto* r : vr)
              if (r->n_levels == n && r->flip_prob == p && r->family == fams[fi]) hit = r;
            if (fi) t << '/';
            if (!hit || hit->status == "missing")
              t << "missing";
            else
              t << csv_number(std::string(block) == "training" ? hit->train : hit->test);
          }
        }
        t << '\n';
      }
      write_text(out_dir / ("table_" + variant + "_" + block + ".csv"),
                 "# entries: " + [&] {
                   std::string s;
                   for (const auto& f : fams) s += (s.empty() ? "" : "/") + f;
                   return s;
                 }() + "\n" + t.str());
    }
  }
  return rows;
}

/// bars.csv: one bar per (variant, family, flip_prob, series, n_levels) with
/// series = evaluation protocol. Within a group, pool sizes run from largest
/// to smallest.
inline void make_bars(const fs::path& study_dir, const fs::path& out_dir, int top_k = 3) {
  auto rows = summarize(load_run_metrics(study_dir), top_k);
  std::stable_sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) {
    if (a.variant != b.variant) return a.variant < b.variant;
    if (a.family != b.family) return a.family < b.family;
    if (a.flip_prob != b.flip_prob) return a.flip_prob < b.flip_prob;
    return a.n_levels > b.n_levels;
  });
  std::ostringstream os;
  os << "variant,family,flip_prob,series,n_levels,value,status\n";
  for (const auto& r : rows) {
    if (r.status == "missing") {
      os << r.variant << ',' << r.family << ',' << format_number(r.flip_prob) << ",," << r.n_levels
         << ",,missing\n";
      continue;
    }
    for (const auto& [series, v] : r.evals)
      os << r.variant << ',' << r.family << ',' << format_number(r.flip_prob) << ',' << series
         << ',' << r.n_levels << ',' << csv_number(v) << ',' << r.status << '\n';
  }
  write_text(out_dir / "bars.csv", os.str());
}

struct SweepPoint {
  std::string agent;
  std::string series;  // "default", "alternative" or "test"
  double zeta = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
};

/// Evaluates each agent on its training pool under both stickiness modes for
/// every zeta, plus a plain test-pool reference.
inline std::vector<SweepPoint> sticky_sweep(const std::vector<fs::path>& checkpoints,
                                            const std::vector<double>& zetas, int episodes,
                                            std::uint64_t seed, unsigned threads = 1) {
  std::vector<SweepPoint> out;
  for (const auto& path : checkpoints) {
    const auto ck = load_checkpoint(path);
    const auto pools = checkpoint_pools(ck);
    const auto train_levels = pools.train.instantiate(threads);
    const auto test_levels = pools.test.instantiate(threads);
    PolicyValueNet<float> net(ck.arch, ck.grid, ck.params);
    const std::string name = path.string();
    for (auto mode : {StickyMode::kDefault, StickyMode::kAlternative})
      for (double z : zetas) {
        EvalProtocol p{PoolKind::kTrain, StickySettings{z, mode}, false, episodes, false};
        auto rep = evaluate(net, train_levels, p, seed, threads);
        out.push_back({name, std::string(to_string(mode)), z, rep.mean, rep.std_error});
      }
    EvalProtocol p{PoolKind::kTest, std::nullopt, false, episodes, false};
    auto rep = evaluate(net, test_levels, p, seed, threads);
    out.push_back({name, "test", 0.0, rep.mean, rep.std_error});
  }
  return out;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& pts) {
  std::ostringstream os;
  os << "agent,series,zeta,mean,std_error\n";
  for (const auto& p : pts)
    os << p.agent << ',' << p.series << ',' << format_number(p.zeta) << ','
       << format_number(p.mean) << ',' << format_number(p.std_error) << '\n';
  return os.str();
}

}  // namespace gridlab
