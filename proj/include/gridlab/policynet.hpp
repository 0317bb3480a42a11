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

// Policy-value networks for the maze agents.
//
// A shared ReLU trunk (valid convolutions or dense layers) is flattened into
// two linear heads: 5 policy logits and 1 state value. Everything is
// templated on the scalar type so the same code runs in float32 for training
// and in float64 for gradient checking.
//
// Memory layout is channels-last throughout:
//   activations  (H, W, C)
//   conv weight  (K, K, C_in, C_out)
//   dense weight (in, out)
// The flattened trunk output is the (H, W, C) activation read linearly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gridlab/error.hpp"
#include "gridlab/gridworld.hpp"
#include "gridlab/rng.hpp"

namespace gridlab {

// ---------------------------------------------------------------------------
// Architectures

enum class Family : std::uint8_t { kConvNet, kBigConvNet, kMlp };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::kConvNet: return "convnet";
    case Family::kBigConvNet: return "bigconvnet";
    case Family::kMlp: return "mlp";
  }
  return "?";
}

inline std::optional<Family> parse_family(std::string_view s) {
  for (auto f : {Family::kConvNet, Family::kBigConvNet, Family::kMlp})
    if (s == to_string(f)) return f;
  return std::nullopt;
}

struct ConvLayer {
  int kernel = 3;
  int stride = 1;
  int channels = 1;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct ArchSpec {
  Family family = Family::kConvNet;
  std::vector<ConvLayer> conv;
  std::vector<int> dense;

  /// e.g. "convnet:K3S1C11-K3S2C11" or "mlp:D512-D128".
  std::string name() const {
    std::ostringstream os;
    os << to_string(family) << ':';
    bool first = true;
    for (const auto& c : conv) {
      os << (first ? "" : "-") << 'K' << c.kernel << 'S' << c.stride << 'C' << c.channels;
      first = false;
    }
    for (int d : dense) {
      os << (first ? "" : "-") << 'D' << d;
      first = false;
    }
    return os.str();
  }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

namespace detail {

inline std::vector<ConvLayer> conv_stack(int k, int c, int repeats) {
  std::vector<ConvLayer> out(repeats, ConvLayer{k, 1, c});
  out.push_back(ConvLayer{3, 2, c});
  return out;
}

}  // namespace detail

inline const std::vector<ArchSpec>& arch_pool(Family family) {
  using detail::conv_stack;
  static const std::vector<ArchSpec> convnets = {
      {Family::kConvNet, conv_stack(3, 11, 1), {}},
      {Family::kConvNet, conv_stack(3, 64, 1), {}},
      {Family::kConvNet, conv_stack(2, 64, 2), {}},
      {Family::kConvNet, conv_stack(2, 64, 3), {}},
      {Family::kConvNet, conv_stack(2, 64, 4), {}},
  };
  static const std::vector<ArchSpec> big = {
      {Family::kBigConvNet, conv_stack(3, 11, 1), {}},
      {Family::kBigConvNet, conv_stack(3, 64, 1), {}},
      {Family::kBigConvNet, conv_stack(2, 128, 3), {}},
      {Family::kBigConvNet, conv_stack(2, 128, 6), {}},
      {Family::kBigConvNet, conv_stack(2, 256, 3), {}},
      {Family::kBigConvNet, conv_stack(2, 256, 6), {}},
      {Family::kBigConvNet, conv_stack(2, 512, 3), {}},
      {Family::kBigConvNet, conv_stack(2, 512, 6), {}},
  };
  static const std::vector<ArchSpec> mlps = {
      {Family::kMlp, {}, {512, 128}},
      {Family::kMlp, {}, {512, 512}},
      {Family::kMlp, {}, {1024, 1024}},
      {Family::kMlp, {}, {512, 128, 64}},
      {Family::kMlp, {}, {1024, 512, 128}},
      {Family::kMlp, {}, {1024, 1024, 1024}},
  };
  switch (family) {
    case Family::kConvNet: return convnets;
    case Family::kBigConvNet: return big;
    case Family::kMlp: return mlps;
  }
  return convnets;
}

inline std::optional<ArchSpec> parse_arch(std::string_view name) {
  auto colon = name.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto family = parse_family(name.substr(0, colon));
  if (!family) return std::nullopt;
  ArchSpec spec;
  spec.family = *family;
  std::string rest(name.substr(colon + 1));
  std::istringstream is(rest);
  std::string tok;
  while (std::getline(is, tok, '-')) {
    if (tok.empty()) return std::nullopt;
    if (tok[0] == 'D') {
      int w = 0;
      if (std::sscanf(tok.c_str(), "D%d", &w) != 1 || w <= 0) return std::nullopt;
      spec.dense.push_back(w);
    } else {
      ConvLayer c;
      if (std::sscanf(tok.c_str(), "K%dS%dC%d", &c.kernel, &c.stride, &c.channels) != 3 ||
          c.kernel <= 0 || c.stride <= 0 || c.channels <= 0)
        return std::nullopt;
      if (!spec.dense.empty()) return std::nullopt;
      spec.conv.push_back(c);
    }
  }
  if (spec.conv.empty() == spec.dense.empty()) return std::nullopt;
  if (spec.family == Family::kMlp ? !spec.conv.empty() : !spec.dense.empty())
    return std::nullopt;
  return spec;
}

// ---------------------------------------------------------------------------
// Tensors

template <class T>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> data;

  std::size_t size() const { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered named tensors. Also used for gradients.
template <class T>
struct Params {
  std::vector<Tensor<T>> tensors;

  std::size_t num_elements() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  Params zeros_like() const {
    Params out = *this;
    for (auto& t : out.tensors) std::fill(t.data.begin(), t.data.end(), T(0));
    return out;
  }

  void set_zero() {
    for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), T(0));
  }

  // this += scale * other
  void axpy(T scale, const Params& other) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& a = tensors[i].data;
      const auto& b = other.tensors[i].data;
      for (std::size_t k = 0; k < a.size(); ++k) a[k] += scale * b[k];
    }
  }

  T squared_norm() const {
    T s = 0;
    for (const auto& t : tensors)
      for (T v : t.data) s += v * v;
    return s;
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      for (T v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
  }

  template <class U>
  Params<U> cast() const {
    Params<U> out;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors)
      out.tensors.push_back({t.name, t.shape, std::vector<U>(t.data.begin(), t.data.end())});
    return out;
  }

  friend bool operator==(const Params&, const Params&) = default;
};

using Grads = Params<float>;

// ---------------------------------------------------------------------------
// Layer plan

struct LayerPlan {
  enum class Kind : std::uint8_t { kConv, kDense } kind = Kind::kConv;
  int in_hw = 0;  // spatial side (conv) or 1 (dense)
  int in_c = 0;   // channels (conv) or width (dense)
  int out_hw = 0;
  int out_c = 0;
  int kernel = 1;
  int stride = 1;
  bool relu = true;
  int weight = 0;  // tensor indices
  int bias = 0;

  std::size_t in_size() const { return std::size_t(in_hw) * in_hw * in_c; }
  std::size_t out_size() const { return std::size_t(out_hw) * out_hw * out_c; }
};

inline bool supported_grid(int grid) { return grid == 9 || grid == 13; }

/// Per-layer plan and parameter shapes for (arch, grid). Throws on
/// unsupported grids or layer stacks that shrink the input below 1x1.
inline std::vector<LayerPlan> plan_layers(const ArchSpec& arch, int grid) {
  if (!supported_grid(grid))
    throw ContractViolation("unsupported grid size " + std::to_string(grid));
  std::vector<LayerPlan> plan;
  int hw = grid, c = kObservationChannels;
  int tensor = 0;
  for (const auto& conv : arch.conv) {
    LayerPlan p;
    p.kind = LayerPlan::Kind::kConv;
    p.in_hw = hw;
    p.in_c = c;
    p.kernel = conv.kernel;
    p.stride = conv.stride;
    p.out_c = conv.channels;
    if (hw < conv.kernel)
      throw ContractViolation(arch.name() + " shrinks grid " + std::to_string(grid) +
                              " below one cell");
    p.out_hw = (hw - conv.kernel) / conv.stride + 1;
    p.weight = tensor++;
    p.bias = tensor++;
    hw = p.out_hw;
    c = p.out_c;
    plan.push_back(p);
  }
  int width = hw * hw * c;
  for (int d : arch.dense) {
    LayerPlan p;
    p.kind = LayerPlan::Kind::kDense;
    p.in_hw = p.out_hw = 1;
    p.in_c = width;
    p.out_c = d;
    p.weight = tensor++;
    p.bias = tensor++;
    width = d;
    plan.push_back(p);
  }
  // heads
  for (int out : {kNumActions, 1}) {
    LayerPlan p;
    p.kind = LayerPlan::Kind::kDense;
    p.in_hw = p.out_hw = 1;
    p.in_c = width;
    p.out_c = out;
    p.relu = false;
    p.weight = tensor++;
    p.bias = tensor++;
    plan.push_back(p);
  }
  return plan;
}

inline std::vector<std::vector<int>> param_shapes(const ArchSpec& arch, int grid) {
  std::vector<std::vector<int>> shapes;
  for (const auto& p : plan_layers(arch, grid)) {
    if (p.kind == LayerPlan::Kind::kConv)
      shapes.push_back({p.kernel, p.kernel, p.in_c, p.out_c});
    else
      shapes.push_back({p.in_c, p.out_c});
    shapes.push_back({p.out_c});
  }
  return shapes;
}

template <class T = float>
Params<T> zero_params(const ArchSpec& arch, int grid) {
  auto plan = plan_layers(arch, grid);
  auto shapes = param_shapes(arch, grid);
  Params<T> params;
  const std::size_t trunk = plan.size() - 2;
  for (std::size_t l = 0; l < plan.size(); ++l) {
    std::string base = l < trunk ? (plan[l].kind == LayerPlan::Kind::kConv ? "conv" : "dense") +
                                       std::to_string(l)
                                 : (l == trunk ? "policy" : "value");
    for (int k = 0; k < 2; ++k) {
      const auto& shape = shapes[2 * l + k];
      std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                      std::multiplies<>());
      params.tensors.push_back({base + (k == 0 ? "/w" : "/b"), shape, std::vector<T>(n, T(0))});
    }
  }
  return params;
}

// Policy logits start 10x smaller than the other layers so the initial
// policy is close to uniform.
inline constexpr double kPolicyHeadInitScale = 0.1;

/// Fan-in scaled uniform initialization, zero biases. Hidden layers use
/// U(-sqrt(6/fan_in), sqrt(6/fan_in)); heads use U(-1/sqrt(fan_in), ...).
inline Params<float> init_params(const ArchSpec& arch, int grid, std::uint64_t seed) {
  auto plan = plan_layers(arch, grid);
  auto params = zero_params<float>(arch, grid);
  Rng rng(seed, stream_tag::kInit);
  const std::size_t trunk = plan.size() - 2;
  for (std::size_t l = 0; l < plan.size(); ++l) {
    const auto& p = plan[l];
    const double fan_in = double(p.kernel) * p.kernel * p.in_c;
    double bound = l < trunk ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
    if (l == trunk) bound *= kPolicyHeadInitScale;
    for (float& w : params.tensors[p.weight].data) w = float(rng.uniform(-bound, bound));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <class T>
struct ForwardCache {
  // acts[0] is the input in (H, W, C); acts[l + 1] is the post-activation
  // output of trunk layer l.
  std::vector<std::vector<T>> acts;
  std::array<T, kNumActions> logits{};
  T value = 0;
  std::uint64_t generation = 0;
  bool valid = false;
  // backward workspace
  mutable std::vector<T> scratch_a, scratch_b;
};

template <class T>
struct PolicyValueOutput {
  std::array<T, kNumActions> logits{};
  T value = 0;
};

namespace detail {

// Dot product with eight fixed partial sums; vectorizes without reassociation
// and gives the same result on every run.
template <class T>
T dot(const T* __restrict a, const T* __restrict b, int n) {
  T lane[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
  T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void conv_forward(const LayerPlan& p, const T* __restrict in, const T* __restrict w,
                  const T* __restrict b, T* __restrict out) {
  const int oc = p.out_c, ic = p.in_c, k = p.kernel, s = p.stride;
  for (int oy = 0; oy < p.out_hw; ++oy) {
    for (int ox = 0; ox < p.out_hw; ++ox) {
      T* o = out + (std::size_t(oy) * p.out_hw + ox) * oc;
      std::copy(b, b + oc, o);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T* x = in + (std::size_t(oy * s + ky) * p.in_hw + (ox * s + kx)) * ic;
          const T* wk = w + std::size_t(ky * k + kx) * ic * oc;
          for (int ci = 0; ci < ic; ++ci) {
            const T v = x[ci];
            if (v == T(0)) continue;
            const T* wr = wk + std::size_t(ci) * oc;
            for (int co = 0; co < oc; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  }
}

// `d_out` is the gradient w.r.t. the pre-activation output. `d_in` may be
// null (first layer). Inputs are post-ReLU, so entries of `d_in` where the
// input is zero are left untouched: the caller masks them anyway.
template <class T>
void conv_backward(const LayerPlan& p, const T* __restrict in, const T* __restrict w,
                   const T* __restrict d_out, T* __restrict d_in, T* __restrict d_w,
                   T* __restrict d_b) {
  const int oc = p.out_c, ic = p.in_c, k = p.kernel, s = p.stride;
  for (int oy = 0; oy < p.out_hw; ++oy) {
    for (int ox = 0; ox < p.out_hw; ++ox) {
      const T* g = d_out + (std::size_t(oy) * p.out_hw + ox) * oc;
      bool any = false;
      for (int co = 0; co < oc; ++co) {
        d_b[co] += g[co];
        any |= g[co] != T(0);
      }
      if (!any) continue;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t pix = std::size_t(oy * s + ky) * p.in_hw + (ox * s + kx);
          const T* x = in + pix * ic;
          T* dx = d_in ? d_in + pix * ic : nullptr;
          const std::size_t wofs = std::size_t(ky * k + kx) * ic * oc;
          for (int ci = 0; ci < ic; ++ci) {
            const T* wr = w + wofs + std::size_t(ci) * oc;
            T* dwr = d_w + wofs + std::size_t(ci) * oc;
            const T v = x[ci];
            if (v == T(0)) continue;
            for (int co = 0; co < oc; ++co) dwr[co] += v * g[co];
            if (dx) dx[ci] += dot(wr, g, oc);
          }
        }
      }
    }
  }
}

template <class T>
void dense_forward(const LayerPlan& p, const T* __restrict in, const T* __restrict w,
                   const T* __restrict b, T* __restrict out) {
  const int n_out = p.out_c;
  std::copy(b, b + n_out, out);
  for (int i = 0; i < p.in_c; ++i) {
    const T v = in[i];
    if (v == T(0)) continue;
    const T* wr = w + std::size_t(i) * n_out;
    for (int o = 0; o < n_out; ++o) out[o] += v * wr[o];
  }
}

template <class T>
void dense_backward(const LayerPlan& p, const T* __restrict in, const T* __restrict w,
                    const T* __restrict d_out, T* __restrict d_in, T* __restrict d_w,
                    T* __restrict d_b) {
  const int n_out = p.out_c;
  for (int o = 0; o < n_out; ++o) d_b[o] += d_out[o];
  for (int i = 0; i < p.in_c; ++i) {
    const T v = in[i];
    const T* wr = w + std::size_t(i) * n_out;
    T* dwr = d_w + std::size_t(i) * n_out;
    if (v == T(0)) continue;
    for (int o = 0; o < n_out; ++o) dwr[o] += v * d_out[o];
    if (d_in) d_in[i] += dot(wr, d_out, n_out);
  }
}

}  // namespace detail

/// A network instance: architecture, grid, and parameters. Copyable value.
/// Forward/backward are const and reentrant; concurrent use only needs
/// distinct caches.
template <class T>
class PolicyValueNet {
 public:
  PolicyValueNet() = default;
  PolicyValueNet(ArchSpec arch, int grid)
      : PolicyValueNet(arch, grid, zero_params<T>(arch, grid)) {}
  PolicyValueNet(ArchSpec arch, int grid, Params<T> params)
      : arch_(std::move(arch)), grid_(grid), plan_(plan_layers(arch_, grid)),
        params_(std::move(params)) {
    check_shapes(params_);
  }

  const ArchSpec& arch() const { return arch_; }
  int grid() const { return grid_; }
  const std::vector<LayerPlan>& plan() const { return plan_; }
  const Params<T>& params() const { return params_; }
  std::uint64_t generation() const { return generation_; }

  // Mutable access invalidates existing caches.
  Params<T>& mutable_params() {
    ++generation_;
    return params_;
  }
  void set_params(Params<T> p) {
    check_shapes(p);
    params_ = std::move(p);
    ++generation_;
  }

  std::size_t num_params() const { return params_.num_elements(); }
  std::size_t input_size() const {
    return std::size_t(kObservationChannels) * grid_ * grid_;
  }

  /// `obs` is an observation in (C, H, W) order.
  void forward(std::span<const float> obs, ForwardCache<T>& cache) const {
    if (obs.size() != input_size())
      throw ContractViolation("forward: observation shape does not match network grid");
    const std::size_t trunk = plan_.size() - 2;
    cache.acts.resize(trunk + 1);
    auto& x = cache.acts[0];
    x.resize(input_size());
    const std::size_t plane = std::size_t(grid_) * grid_;
    for (int c = 0; c < kObservationChannels; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        x[i * kObservationChannels + c] = T(obs[c * plane + i]);
    for (std::size_t l = 0; l < trunk; ++l) {
      const auto& p = plan_[l];
      auto& out = cache.acts[l + 1];
      out.resize(p.out_size());
      run_layer(p, cache.acts[l].data(), out.data());
      for (T& v : out) v = v > T(0) ? v : T(0);
    }
    const T* feat = cache.acts[trunk].data();
    detail::dense_forward(plan_[trunk], feat, W(plan_[trunk]), B(plan_[trunk]),
                          cache.logits.data());
    detail::dense_forward(plan_[trunk + 1], feat, W(plan_[trunk + 1]), B(plan_[trunk + 1]),
                          &cache.value);
    cache.generation = generation_;
    cache.valid = true;
  }

  PolicyValueOutput<T> forward(const Observation& obs) const {
    if (obs.size != grid_)
      throw ContractViolation("forward: observation grid does not match network grid");
    ForwardCache<T> cache;
    forward(obs.data, cache);
    return {cache.logits, cache.value};
  }

  std::vector<PolicyValueOutput<T>> forward_batch(std::span<const Observation> batch) const {
    std::vector<PolicyValueOutput<T>> out;
    out.reserve(batch.size());
    ForwardCache<T> cache;
    for (const auto& obs : batch) {
      forward(obs.data, cache);
      out.push_back({cache.logits, cache.value});
    }
    return out;
  }

  /// Accumulates d(loss)/d(params) into `grads` given the gradient of the
  /// loss w.r.t. the logits and the value for the frame held in `cache`.
  void backward(const ForwardCache<T>& cache, std::span<const T, kNumActions> d_logits,
                T d_value, Params<T>& grads) const {
    if (!cache.valid || cache.generation != generation_)
      throw ContractViolation("backward: stale forward cache");
    if (grads.tensors.size() != params_.tensors.size())
      throw ContractViolation("backward: gradient buffer does not match parameters");
    const std::size_t trunk = plan_.size() - 2;
    const T* feat = cache.acts[trunk].data();
    std::vector<T>& d_feat = cache.scratch_a;
    d_feat.assign(cache.acts[trunk].size(), T(0));
    {
      const auto& p = plan_[trunk];
      detail::dense_backward(p, feat, W(p), d_logits.data(), d_feat.data(), dW(grads, p),
                             dB(grads, p));
      const auto& v = plan_[trunk + 1];
      detail::dense_backward(v, feat, W(v), &d_value, d_feat.data(), dW(grads, v),
                             dB(grads, v));
    }
    std::vector<T>& d_in = cache.scratch_b;
    for (std::size_t l = trunk; l-- > 0;) {
      const auto& p = plan_[l];
      const auto& out = cache.acts[l + 1];
      for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] <= T(0)) d_feat[i] = T(0);
      T* din = nullptr;
      if (l > 0) {
        d_in.assign(cache.acts[l].size(), T(0));
        din = d_in.data();
      }
      if (p.kind == LayerPlan::Kind::kConv)
        detail::conv_backward(p, cache.acts[l].data(), W(p), d_feat.data(), din,
                              dW(grads, p), dB(grads, p));
      else
        detail::dense_backward(p, cache.acts[l].data(), W(p), d_feat.data(), din,
                               dW(grads, p), dB(grads, p));
      if (l > 0) std::swap(d_feat, d_in);
    }
  }

 private:
  void check_shapes(const Params<T>& p) const {
    auto shapes = param_shapes(arch_, grid_);
    bool ok = p.tensors.size() == shapes.size();
    for (std::size_t i = 0; ok && i < shapes.size(); ++i) {
      std::size_t n = std::accumulate(shapes[i].begin(), shapes[i].end(), std::size_t{1},
                                      std::multiplies<>());
      ok = p.tensors[i].shape == shapes[i] && p.tensors[i].data.size() == n;
    }
    if (!ok) throw ContractViolation("parameter shapes do not match " + arch_.name());
  }

  void run_layer(const LayerPlan& p, const T* in, T* out) const {
    if (p.kind == LayerPlan::Kind::kConv)
      detail::conv_forward(p, in, W(p), B(p), out);
    else
      detail::dense_forward(p, in, W(p), B(p), out);
  }

  const T* W(const LayerPlan& p) const { return params_.tensors[p.weight].data.data(); }
  const T* B(const LayerPlan& p) const { return params_.tensors[p.bias].data.data(); }
  static T* dW(Params<T>& g, const LayerPlan& p) { return g.tensors[p.weight].data.data(); }
  static T* dB(Params<T>& g, const LayerPlan& p) { return g.tensors[p.bias].data.data(); }

  ArchSpec arch_;
  int grid_ = 0;
  std::vector<LayerPlan> plan_;
  Params<T> params_;
  std::uint64_t generation_ = 1;
};

// ---------------------------------------------------------------------------
// Policy distribution

template <class T>
std::array<T, kNumActions> softmax(std::span<const T, kNumActions> logits) {
  T m = logits[0];
  for (T v : logits) m = std::max(m, v);
  std::array<T, kNumActions> p{};
  T z = 0;
  for (int i = 0; i < kNumActions; ++i) z += (p[i] = std::exp(logits[i] - m));
  for (T& v : p) v /= z;
  return p;
}

template <class T>
std::array<T, kNumActions> log_softmax(std::span<const T, kNumActions> logits) {
  T m = logits[0];
  for (T v : logits) m = std::max(m, v);
  T z = 0;
  for (T v : logits) z += std::exp(v - m);
  const T lz = m + std::log(z);
  std::array<T, kNumActions> out{};
  for (int i = 0; i < kNumActions; ++i) out[i] = logits[i] - lz;
  return out;
}

template <class T>
void require_finite(std::span<const T, kNumActions> logits) {
  for (T v : logits)
    if (!std::isfinite(v)) throw ContractViolation("non-finite policy logits");
}

template <class T>
Action sample_action(std::span<const T, kNumActions> logits, Rng& rng) {
  require_finite(logits);
  auto p = softmax(logits);
  double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < kNumActions - 1; ++i) {
    acc += double(p[i]);
    if (u < acc) return static_cast<Action>(i);
  }
  return static_cast<Action>(kNumActions - 1);
}

template <class T>
Action greedy_action(std::span<const T, kNumActions> logits) {
  require_finite(logits);
  return static_cast<Action>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

template <class T>
struct LogProbEntropy {
  T log_prob;
  T entropy;  // nats
};

template <class T>
LogProbEntropy<T> log_prob_entropy(std::span<const T, kNumActions> logits, Action a) {
  require_finite(logits);
  auto lp = log_softmax(logits);
  T h = 0;
  for (T l : lp) h -= std::exp(l) * l;
  return {lp[static_cast<int>(a)], h};
}

// ---------------------------------------------------------------------------
// RMSProp

struct RmsPropConfig {
  double learning_rate = 1e-3;
  double decay = 0.99;
  double epsilon = 1e-8;
};

struct OptState {
  RmsPropConfig config;
  std::vector<std::vector<float>> accumulators;

  static OptState for_params(const Params<float>& p, RmsPropConfig cfg) {
    OptState s{cfg, {}};
    for (const auto& t : p.tensors) s.accumulators.emplace_back(t.size(), 0.0f);
    return s;
  }
};

/// acc <- decay*acc + (1-decay)*g^2 ; theta <- theta - lr*g/(sqrt(acc)+eps)
inline void rmsprop_apply(std::span<float> param, std::span<const float> grad,
                          std::span<float> acc, const RmsPropConfig& cfg) {
  const float rho = float(cfg.decay), lr = float(cfg.learning_rate),
              eps = float(cfg.epsilon);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    acc[i] = rho * acc[i] + (1.0f - rho) * g * g;
    // decayed accumulators of rarely active weights would otherwise go subnormal
    if (acc[i] < std::numeric_limits<float>::min()) acc[i] = 0.0f;
    param[i] -= lr * g / (std::sqrt(acc[i]) + eps);
  }
}

struct UpdateStatus {
  bool applied = true;
  std::string reason;
};

inline UpdateStatus rmsprop_update(Params<float>& params, const Params<float>& grads,
                                   OptState& opt) {
  if (grads.tensors.size() != params.tensors.size() ||
      opt.accumulators.size() != params.tensors.size())
    throw ContractViolation("rmsprop_update: shape mismatch");
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    if (grads.tensors[i].size() != params.tensors[i].size() ||
        opt.accumulators[i].size() != params.tensors[i].size())
      throw ContractViolation("rmsprop_update: shape mismatch in " + params.tensors[i].name);
  if (!grads.all_finite()) return {false, "non-finite gradient; update rejected"};
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    rmsprop_apply(params.tensors[i].data, grads.tensors[i].data, opt.accumulators[i],
                  opt.config);
  return {};
}

}  // namespace gridlab
