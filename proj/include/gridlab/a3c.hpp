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

// Asynchronous advantage actor-critic: n-step returns, the actor-critic loss,
// a parameter store shared by training workers, and the training loop with a
// read-only test worker.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "gridlab/checkpoint.hpp"
#include "gridlab/error.hpp"
#include "gridlab/gridworld.hpp"
#include "gridlab/policynet.hpp"
#include "gridlab/pools.hpp"
#include "gridlab/rng.hpp"
#include "gridlab/stochasticity.hpp"

namespace gridlab {

// ---------------------------------------------------------------------------
// Rollouts and targets

struct RolloutFrame {
  std::vector<float> observation;  // (C, H, W)
  Action action = Action::kStay;
  double reward = 0.0;  // clipped
  bool done = false;
  double value = 0.0;  // V(s) when the action was chosen
};

struct RolloutSegment {
  std::vector<RolloutFrame> frames;
  double bootstrap = 0.0;  // V of the state after the last frame; unused if done

  bool terminal() const { return !frames.empty() && frames.back().done; }
};

struct ReturnAdvantage {
  double ret = 0.0;
  double advantage = 0.0;
};

/// R_i = r_i + gamma * R_{i+1}, seeded with the bootstrap value (0 at episode
/// end); A_i = R_i - V(s_i).
inline std::vector<ReturnAdvantage> compute_returns(const RolloutSegment& seg, double gamma) {
  std::vector<ReturnAdvantage> out(seg.frames.size());
  double r = seg.terminal() ? 0.0 : seg.bootstrap;
  for (std::size_t i = seg.frames.size(); i-- > 0;) {
    const auto& f = seg.frames[i];
    r = f.reward + gamma * (f.done ? 0.0 : r);
    out[i] = {r, r - f.value};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss

struct LossConfig {
  double entropy_coef = 0.01;
  double value_coef = 0.5;
};

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;  // summed over frames
  double total = 0.0;
  std::size_t frames = 0;
};

/// Gradient of the logits and value for one frame of
///   -log pi(a) * A + value_coef * (R - V)^2 - entropy_coef * H(pi),
/// with A held constant.
template <class T>
void frame_loss_grads(std::span<const T, kNumActions> logits, T value, Action a,
                      double ret, double advantage, const LossConfig& cfg,
                      std::array<T, kNumActions>& d_logits, T& d_value, LossStats& stats) {
  const auto lp = log_softmax(logits);
  double h = 0.0;
  for (T l : lp) h -= std::exp(double(l)) * double(l);
  for (int k = 0; k < kNumActions; ++k) {
    const double p = std::exp(double(lp[k]));
    const double onehot = k == static_cast<int>(a) ? 1.0 : 0.0;
    d_logits[k] = T(advantage * (p - onehot) + cfg.entropy_coef * p * (double(lp[k]) + h));
  }
  const double err = ret - double(value);
  d_value = T(-2.0 * cfg.value_coef * err);
  const double pl = -double(lp[static_cast<int>(a)]) * advantage;
  const double vl = cfg.value_coef * err * err;
  stats.policy_loss += pl;
  stats.value_loss += vl;
  stats.entropy += h;
  stats.total += pl + vl - cfg.entropy_coef * h;
  ++stats.frames;
}

/// Accumulates the segment loss gradient into `grads` using forward caches
/// already computed with the network's current parameters.
template <class T>
LossStats accumulate_loss_grads(const PolicyValueNet<T>& net,
                                std::span<const ForwardCache<T>> caches,
                                const RolloutSegment& seg, std::span<const ReturnAdvantage> ra,
                                const LossConfig& cfg, Params<T>& grads) {
  LossStats stats;
  std::array<T, kNumActions> d_logits{};
  T d_value{};
  for (std::size_t i = 0; i < seg.frames.size(); ++i) {
    const auto& c = caches[i];
    frame_loss_grads<T>(c.logits, c.value, seg.frames[i].action, ra[i].ret, ra[i].advantage,
                        cfg, d_logits, d_value, stats);
    net.backward(c, d_logits, d_value, grads);
  }
  return stats;
}

/// Recomputes the forward pass for every frame; advantages use the fresh
/// value estimates. Returns gradients of the summed segment loss.
template <class T>
std::pair<Params<T>, LossStats> loss_and_grads(const PolicyValueNet<T>& net,
                                               const RolloutSegment& seg, double gamma,
                                               const LossConfig& cfg) {
  std::vector<ForwardCache<T>> caches(seg.frames.size());
  RolloutSegment fresh = seg;
  for (std::size_t i = 0; i < seg.frames.size(); ++i) {
    net.forward(seg.frames[i].observation, caches[i]);
    fresh.frames[i].value = double(caches[i].value);
  }
  const auto ra = compute_returns(fresh, gamma);
  auto grads = net.params().zeros_like();
  auto stats = accumulate_loss_grads<T>(net, caches, fresh, ra, cfg, grads);
  if (!grads.all_finite() || !std::isfinite(stats.total))
    throw Error("loss_and_grads: non-finite loss or gradient (policy " +
                std::to_string(stats.policy_loss) + ", value " +
                std::to_string(stats.value_loss) + ", entropy " +
                std::to_string(stats.entropy) + ")");
  return {std::move(grads), stats};
}

/// Scales `grads` so its global L2 norm is at most `max_norm`; returns the
/// norm before scaling.
template <class T>
double clip_global_norm(Params<T>& grads, double max_norm) {
  const double norm = std::sqrt(double(grads.squared_norm()));
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = T(max_norm / norm);
    for (auto& t : grads.tensors)
      for (T& v : t.data) v *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Parameter store

/// Shared parameters and optimizer state. Reads and updates lock one tensor
/// at a time, so a snapshot is consistent per tensor but may mix versions
/// across tensors.
class ParamStore {
 public:
  ParamStore(Params<float> init, RmsPropConfig cfg,
             std::optional<std::vector<std::vector<float>>> accumulators = std::nullopt,
             std::int64_t start_step = 0)
      : params_(std::move(init)),
        opt_(OptState::for_params(params_, cfg)),
        locks_(std::make_unique<std::mutex[]>(params_.tensors.size())),
        steps_(start_step) {
    if (accumulators) {
      if (accumulators->size() != opt_.accumulators.size())
        throw ContractViolation("ParamStore: accumulator count mismatch");
      for (std::size_t i = 0; i < accumulators->size(); ++i)
        if ((*accumulators)[i].size() != opt_.accumulators[i].size())
          throw ContractViolation("ParamStore: accumulator shape mismatch");
      opt_.accumulators = std::move(*accumulators);
    }
  }

  void snapshot(Params<float>& out) const {
    if (out.tensors.size() != params_.tensors.size()) out = params_.zeros_like();
    for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
      std::lock_guard lock(locks_[i]);
      std::copy(params_.tensors[i].data.begin(), params_.tensors[i].data.end(),
                out.tensors[i].data.begin());
    }
    reads_.fetch_add(1, std::memory_order_relaxed);
  }

  Params<float> snapshot() const {
    Params<float> out = params_.zeros_like();
    snapshot(out);
    return out;
  }

  /// Applies one RMSProp step with learning rate `lr`. Non-finite gradients
  /// are rejected without touching any tensor.
  UpdateStatus apply(const Params<float>& grads, double lr) {
    if (grads.tensors.size() != params_.tensors.size())
      throw ContractViolation("ParamStore::apply: gradient shape mismatch");
    if (!grads.all_finite()) {
      rejected_.fetch_add(1, std::memory_order_relaxed);
      return {false, "non-finite gradient; update rejected"};
    }
    RmsPropConfig cfg = opt_.config;
    cfg.learning_rate = lr;
    for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
      std::lock_guard lock(locks_[i]);
      rmsprop_apply(params_.tensors[i].data, grads.tensors[i].data, opt_.accumulators[i], cfg);
    }
    writes_.fetch_add(1, std::memory_order_relaxed);
    return {};
  }

  std::int64_t add_steps(std::int64_t n) { return steps_.fetch_add(n) + n; }
  std::int64_t steps() const { return steps_.load(); }
  std::uint64_t writes() const { return writes_.load(); }
  std::uint64_t reads() const { return reads_.load(); }
  std::uint64_t rejected() const { return rejected_.load(); }
  const RmsPropConfig& config() const { return opt_.config; }

  std::vector<std::vector<float>> accumulators() const {
    std::vector<std::vector<float>> out(opt_.accumulators.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::lock_guard lock(locks_[i]);
      out[i] = opt_.accumulators[i];
    }
    return out;
  }

 private:
  Params<float> params_;
  OptState opt_;
  std::unique_ptr<std::mutex[]> locks_;
  std::atomic<std::int64_t> steps_;
  std::atomic<std::uint64_t> writes_{0};
  std::atomic<std::uint64_t> rejected_{0};
  mutable std::atomic<std::uint64_t> reads_{0};
};

// ---------------------------------------------------------------------------
// Learning curves

struct CurvePoint {
  std::int64_t step = 0;
  double reward = 0.0;
};

inline constexpr std::size_t kSmoothingWindow = 200;

/// out[i] = mean of rewards[max(0, i - window + 1) .. i].
inline std::vector<double> smooth(std::span<const double> rewards,
                                  std::size_t window = kSmoothingWindow) {
  if (window == 0) throw ContractViolation("smooth: window must be positive");
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += rewards[j];
    out[i] = s / double(i + 1 - lo);
  }
  return out;
}

struct LearningCurve {
  std::vector<CurvePoint> train;
  std::vector<CurvePoint> test;

  static std::vector<double> rewards(std::span<const CurvePoint> pts) {
    std::vector<double> r;
    r.reserve(pts.size());
    for (const auto& p : pts) r.push_back(p.reward);
    return r;
  }

  // End-of-training metric: mean of the last `window` episodes (NaN if none).
  static double tail_mean(std::span<const CurvePoint> pts,
                          std::size_t window = kSmoothingWindow) {
    if (pts.empty()) return std::nan("");
    const std::size_t lo = pts.size() > window ? pts.size() - window : 0;
    double s = 0.0;
    for (std::size_t i = lo; i < pts.size(); ++i) s += pts[i].reward;
    return s / double(pts.size() - lo);
  }
};

/// CSV with columns step,raw,smoothed,stream.
inline void write_curve_csv(const std::filesystem::path& path, const LearningCurve& curve,
                            std::size_t window = kSmoothingWindow) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "step,raw,smoothed,stream\n";
  os.precision(10);
  for (auto [pts, name] : {std::pair{&curve.train, "train"}, std::pair{&curve.test, "test"}}) {
    const auto sm = smooth(LearningCurve::rewards(*pts), window);
    for (std::size_t i = 0; i < pts->size(); ++i)
      os << (*pts)[i].step << ',' << (*pts)[i].reward << ',' << sm[i] << ',' << name << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  MazeVariant variant = MazeVariant::kBasic;
  int n_train_levels = 10;
  int n_test_levels = 100;
  double flip_prob = 0.0;
  int unroll_length = 15;
  double reward_clip = 2.0;  // symmetric: [-clip, clip]
  double gamma = 0.99;
  double entropy_coef = 0.01;
  double learning_rate = 1e-3;
  bool anneal_learning_rate = false;  // linear decay to 0 at max_steps
  double value_coef = 0.5;
  double grad_clip_norm = 40.0;
  std::int64_t max_steps = 1'000'000;
  WrapperConfig wrappers{std::nullopt, false, Stage::kTraining};
  ArchSpec arch = arch_pool(Family::kConvNet).front();
  std::uint64_t run_seed = 0;
  std::uint64_t pool_seed = 0;  // level pools; shared by runs of one study cell
  int workers = 4;
  bool deterministic = false;  // one worker, test episodes interleaved
  std::int64_t test_interval_steps = 1000;
  std::int64_t checkpoint_interval = 0;  // 0: final checkpoint only
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::optional<std::filesystem::path> resume_from;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (n_train_levels <= 0) v.push_back("n_train_levels must be positive");
    if (n_test_levels <= 0) v.push_back("n_test_levels must be positive");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) v.push_back("flip_prob must lie in [0, 1]");
    if (unroll_length <= 0) v.push_back("unroll_length must be positive");
    if (!(reward_clip > 0.0)) v.push_back("reward_clip must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) v.push_back("gamma must lie in [0, 1]");
    if (!(entropy_coef >= 0.0)) v.push_back("entropy_coef must be non-negative");
    if (!(learning_rate > 0.0)) v.push_back("learning_rate must be positive");
    if (!(value_coef >= 0.0)) v.push_back("value_coef must be non-negative");
    if (!(grad_clip_norm >= 0.0)) v.push_back("grad_clip_norm must be non-negative");
    if (max_steps < 0) v.push_back("max_steps must be non-negative");
    if (workers <= 0) v.push_back("workers must be positive");
    if (deterministic && workers != 1) v.push_back("deterministic mode requires workers = 1");
    if (test_interval_steps <= 0) v.push_back("test_interval_steps must be positive");
    if (checkpoint_interval < 0) v.push_back("checkpoint_interval must be non-negative");
    if (wrappers.sticky && !(wrappers.sticky->zeta >= 0.0 && wrappers.sticky->zeta <= 1.0))
      v.push_back("sticky zeta must lie in [0, 1]");
    if (arch.family == Family::kMlp ? arch.dense.empty() : arch.conv.empty())
      v.push_back("arch has no hidden layers");
    return v;
  }

  void validate() const {
    if (auto v = violations(); !v.empty()) throw ConfigError(std::move(v));
  }
};

struct TrainResult {
  Params<float> params;
  std::vector<std::vector<float>> accumulators;
  LearningCurve curve;
  std::vector<std::filesystem::path> checkpoints;
  std::int64_t steps = 0;
  std::uint64_t updates_applied = 0;  // counted by training workers
  std::uint64_t updates_rejected = 0;
  std::uint64_t store_writes = 0;  // counted by the store
  double seconds = 0.0;

  double final_train() const { return LearningCurve::tail_mean(curve.train); }
  double final_test() const { return LearningCurve::tail_mean(curve.test); }
};

struct TrainProgress {
  std::int64_t steps;
  std::int64_t max_steps;
  double train_reward;  // tail means; NaN before the first episode
  double test_reward;
};

namespace detail {

class CurveRecorder {
 public:
  void train(std::int64_t step, double r) {
    std::lock_guard lock(mu_);
    curve_.train.push_back({step, r});
  }
  void test(std::int64_t step, double r) {
    std::lock_guard lock(mu_);
    curve_.test.push_back({step, r});
  }
  TrainProgress progress(std::int64_t steps, std::int64_t max_steps) const {
    std::lock_guard lock(mu_);
    return {steps, max_steps, LearningCurve::tail_mean(curve_.train),
            LearningCurve::tail_mean(curve_.test)};
  }
  LearningCurve take() {
    std::lock_guard lock(mu_);
    return std::move(curve_);
  }

 private:
  mutable std::mutex mu_;
  LearningCurve curve_;
};

inline double clip_reward(double r, double c) { return std::clamp(r, -c, c); }

/// Plays one episode with a sampled policy and no wrappers; used by the test
/// worker.
inline double play_test_episode(const PolicyValueNet<float>& net, const LevelPtr& level,
                                std::uint64_t episode_seed, ForwardCache<float>& cache,
                                std::vector<float>& obs) {
  EnvState st = reset(level);
  Rng rng(episode_seed, stream_tag::kPolicy);
  obs.resize(net.input_size());
  while (!st.done) {
    observe_into(st, obs);
    net.forward(obs, cache);
    step(st, sample_action<float>(cache.logits, rng));
  }
  return st.cumulative_reward;
}

class TrainWorker {
 public:
  TrainWorker(const TrainConfig& cfg, const std::vector<LevelPtr>& levels, int grid, int index)
      : cfg_(cfg),
        levels_(levels),
        rng_(cfg.run_seed, stream_tag::kWorker, std::uint64_t(index)),
        env_(cfg.wrappers),
        net_(cfg.arch, grid),
        caches_(std::size_t(cfg.unroll_length) + 1) {
    grads_ = net_.params().zeros_like();
    bootstrap_obs_.resize(net_.input_size());
    seg_.frames.reserve(std::size_t(cfg.unroll_length));
  }

  // Collects one segment and pushes its gradient; returns frames played.
  std::int64_t run_segment(ParamStore& store, CurveRecorder& rec) {
    store.snapshot(net_.mutable_params());
    seg_.frames.resize(std::size_t(cfg_.unroll_length));
    std::size_t n = 0;
    const std::int64_t base_step = store.steps();
    while (n < std::size_t(cfg_.unroll_length)) {
      if (need_reset_) {
        env_.reset(levels_[rng_.below(levels_.size())], rng_.next());
        need_reset_ = false;
      }
      auto& f = seg_.frames[n];
      f.observation.resize(net_.input_size());
      observe_into(env_.state(), f.observation);
      net_.forward(f.observation, caches_[n]);
      f.action = sample_action<float>(caches_[n].logits, rng_);
      const auto res = env_.step(f.action);
      f.reward = clip_reward(res.outcome.reward, cfg_.reward_clip);
      f.done = res.outcome.done;
      f.value = caches_[n].value;
      ++n;
      if (f.done) {
        rec.train(base_step + std::int64_t(n), env_.state().cumulative_reward);
        need_reset_ = true;
        break;
      }
    }
    seg_.frames.resize(n);
    seg_.bootstrap = 0.0;
    if (!seg_.terminal()) {
      observe_into(env_.state(), bootstrap_obs_);
      net_.forward(bootstrap_obs_, caches_[n]);
      seg_.bootstrap = caches_[n].value;
    }
    const auto ra = compute_returns(seg_, cfg_.gamma);
    grads_.set_zero();
    const auto stats = accumulate_loss_grads<float>(
        net_, std::span<const ForwardCache<float>>(caches_.data(), n), seg_, ra,
        LossConfig{cfg_.entropy_coef, cfg_.value_coef}, grads_);
    clip_global_norm(grads_, cfg_.grad_clip_norm);
    double lr = cfg_.learning_rate;
    if (cfg_.anneal_learning_rate && cfg_.max_steps > 0)
      lr *= std::max(0.0, 1.0 - double(store.steps()) / double(cfg_.max_steps));
    const auto status = store.apply(grads_, lr);
    if (status.applied) {
      ++applied_;
      consecutive_rejects_ = 0;
    } else if (++consecutive_rejects_ >= 100) {
      throw Error("training diverged: " + status.reason + " (policy loss " +
                  std::to_string(stats.policy_loss) + ", value loss " +
                  std::to_string(stats.value_loss) + ", entropy " +
                  std::to_string(stats.entropy) + ")");
    }
    store.add_steps(std::int64_t(n));
    return std::int64_t(n);
  }

  std::uint64_t applied() const { return applied_; }

 private:
  const TrainConfig& cfg_;
  const std::vector<LevelPtr>& levels_;
  Rng rng_;
  WrappedEnv env_;
  PolicyValueNet<float> net_;
  std::vector<ForwardCache<float>> caches_;
  Params<float> grads_;
  RolloutSegment seg_;
  std::vector<float> bootstrap_obs_;
  bool need_reset_ = true;
  std::uint64_t applied_ = 0;
  int consecutive_rejects_ = 0;
};

/// Read-only evaluator over the test pool. Holds the store by const
/// reference: it can snapshot but never apply.
class TestWorker {
 public:
  TestWorker(const TrainConfig& cfg, const std::vector<LevelPtr>& levels, int grid)
      : levels_(levels),
        rng_(cfg.run_seed, stream_tag::kWorker, 0xFFFF),
        net_(cfg.arch, grid) {}

  void run_episode(const ParamStore& store, CurveRecorder& rec) {
    store.snapshot(net_.mutable_params());
    const auto& level = levels_[rng_.below(levels_.size())];
    const double r = play_test_episode(net_, level, rng_.next(), cache_, obs_);
    rec.test(store.steps(), r);
  }

 private:
  const std::vector<LevelPtr>& levels_;
  Rng rng_;
  PolicyValueNet<float> net_;
  ForwardCache<float> cache_;
  std::vector<float> obs_;
};

}  // namespace detail

inline int grid_for(const TrainConfig& cfg) { return grid_size(cfg.variant); }

/// Trains with `cfg.workers` asynchronous workers plus one test worker, or
/// strictly sequentially in deterministic mode. `on_progress` is called from
/// the coordinating thread roughly once per second.
inline TrainResult train(const TrainConfig& cfg,
                         const std::function<void(const TrainProgress&)>& on_progress = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int grid = grid_for(cfg);
  const auto pools = split_pools(cfg.pool_seed, std::size_t(cfg.n_train_levels),
                                 std::size_t(cfg.n_test_levels), cfg.variant, cfg.flip_prob);
  const unsigned gen_threads = cfg.deterministic ? 1u : unsigned(cfg.workers);
  const auto train_levels = pools.train.instantiate(gen_threads);
  const auto test_levels = pools.test.instantiate(gen_threads);

  Params<float> init;
  std::optional<std::vector<std::vector<float>>> acc;
  std::int64_t start_step = 0;
  if (cfg.resume_from) {
    auto ck = load_checkpoint(*cfg.resume_from);
    if (!(ck.arch == cfg.arch) || ck.grid != grid)
      throw ConfigError({"resume checkpoint architecture does not match the config"});
    init = std::move(ck.params);
    acc = std::move(ck.accumulators);
    start_step = ck.step;
  } else {
    init = init_params(cfg.arch, grid, derive_seed(cfg.run_seed, stream_tag::kInit));
  }
  ParamStore store(std::move(init), RmsPropConfig{cfg.learning_rate}, std::move(acc),
                   start_step);
  detail::CurveRecorder rec;
  TrainResult result;

  auto save = [&](std::int64_t step) {
    if (cfg.checkpoint_dir.empty()) return;
    Checkpoint ck{cfg.arch, grid, store.snapshot(), store.accumulators(), cfg.run_seed, step,
                  nlohmann::ordered_json::object()};
    ck.meta["variant"] = std::string(to_string(cfg.variant));
    ck.meta["pool_seed"] = cfg.pool_seed;
    ck.meta["n_train_levels"] = cfg.n_train_levels;
    ck.meta["n_test_levels"] = cfg.n_test_levels;
    ck.meta["flip_prob"] = cfg.flip_prob;
    auto path = cfg.checkpoint_dir / ("step_" + std::to_string(step) + ".json");
    save_checkpoint(path, ck);
    result.checkpoints.push_back(path);
  };
  std::int64_t next_ckpt =
      cfg.checkpoint_interval > 0 ? start_step + cfg.checkpoint_interval : INT64_MAX;
  auto maybe_checkpoint = [&] {
    while (store.steps() >= next_ckpt) {
      save(store.steps());
      next_ckpt += cfg.checkpoint_interval;
    }
  };
  auto last_report = std::chrono::steady_clock::now();
  auto maybe_report = [&] {
    if (!on_progress) return;
    auto now = std::chrono::steady_clock::now();
    if (now - last_report < std::chrono::seconds(1)) return;
    last_report = now;
    on_progress(rec.progress(store.steps(), cfg.max_steps));
  };

  const std::int64_t end_step = start_step + cfg.max_steps;
  if (cfg.deterministic) {
    detail::TrainWorker worker(cfg, train_levels, grid, 0);
    detail::TestWorker tester(cfg, test_levels, grid);
    std::int64_t next_test = start_step;
    while (store.steps() < end_step) {
      worker.run_segment(store, rec);
      while (store.steps() >= next_test) {
        tester.run_episode(store, rec);
        next_test += cfg.test_interval_steps;
      }
      maybe_checkpoint();
      maybe_report();
    }
    result.updates_applied = worker.applied();
  } else {
    std::atomic<bool> stop{false};
    std::mutex err_mu;
    std::exception_ptr error;
    std::string error_context;
    std::vector<std::unique_ptr<detail::TrainWorker>> workers;
    for (int w = 0; w < cfg.workers; ++w)
      workers.push_back(std::make_unique<detail::TrainWorker>(cfg, train_levels, grid, w));
    detail::TestWorker tester(cfg, test_levels, grid);
    auto fail = [&](std::string ctx) {
      std::lock_guard lock(err_mu);
      if (!error) {
        error = std::current_exception();
        error_context = std::move(ctx);
      }
      stop = true;
    };
    {
      std::vector<std::jthread> threads;
      for (int w = 0; w < cfg.workers; ++w)
        threads.emplace_back([&, w] {
          try {
            while (!stop && store.steps() < end_step) workers[std::size_t(w)]->run_segment(store, rec);
          } catch (...) {
            fail("worker " + std::to_string(w) + " at step " + std::to_string(store.steps()));
          }
        });
      std::atomic<bool> training_done{false};
      std::jthread test_thread([&] {
        try {
          const ParamStore& ro = store;
          std::int64_t next_test = start_step;
          while (!training_done && !stop) {
            if (ro.steps() < next_test) {
              std::this_thread::sleep_for(std::chrono::milliseconds(1));
              continue;
            }
            next_test = ro.steps() + cfg.test_interval_steps;
            tester.run_episode(ro, rec);
          }
        } catch (...) {
          fail("test worker at step " + std::to_string(store.steps()));
        }
      });
      while (!stop && store.steps() < end_step) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        maybe_checkpoint();
        maybe_report();
      }
      for (auto& t : threads) t.join();
      training_done = true;
    }
    if (error) {
      try {
        std::rethrow_exception(error);
      } catch (const std::exception& e) {
        throw Error("training failed in " + error_context + ": " + e.what());
      }
    }
    for (const auto& w : workers) result.updates_applied += w->applied();
  }

  result.steps = store.steps();
  if (!cfg.checkpoint_dir.empty() && cfg.max_steps > 0) save(store.steps());
  result.params = store.snapshot();
  result.accumulators = store.accumulators();
  if (on_progress) on_progress(rec.progress(store.steps(), cfg.max_steps));
  result.curve = rec.take();
  result.updates_rejected = store.rejected();
  result.store_writes = store.writes();
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Hyperparameter sampling

struct HyperSample {
  ArchSpec arch;
  double learning_rate = 0.0;
  double entropy_coef = 0.0;
};

inline constexpr double kLrMin = 1e-5, kLrMax = 5e-2;
inline constexpr double kEntropyMin = 1e-4, kEntropyMax = 5e-2;

inline HyperSample sample_hyperparams(std::uint64_t run_index, std::uint64_t master_seed,
                                      Family family) {
  Rng rng(master_seed, stream_tag::kHyper, run_index);
  const auto& pool = arch_pool(family);
  HyperSample h;
  h.arch = pool[rng.below(pool.size())];
  h.learning_rate = rng.log_uniform(kLrMin, kLrMax);
  h.entropy_coef = rng.log_uniform(kEntropyMin, kEntropyMax);
  return h;
}

}  // namespace gridlab
