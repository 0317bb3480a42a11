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

// Test-only oracles for the network code: a naive straight-line forward pass
// written directly from the layer definitions, and a central finite
// difference gradient checker on the float64 network.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "gridlab/policynet.hpp"

namespace gridlab::testing {

/// Reference forward pass. Indexes activations as [c][y][x] (the observation
/// layout) and weights by their documented (K, K, C_in, C_out) / (in, out)
/// meaning, with no sparsity shortcuts.
inline PolicyValueOutput<double> naive_forward(const ArchSpec& arch, int grid,
                                               const Params<double>& params,
                                               const std::vector<float>& obs_chw) {
  int hw = grid, ch = kObservationChannels;
  // act[c][y][x]
  std::vector<double> act(obs_chw.begin(), obs_chw.end());
  int t = 0;
  for (const auto& layer : arch.conv) {
    const auto& w = params.tensors[t].data;
    const auto& b = params.tensors[t + 1].data;
    t += 2;
    const int k = layer.kernel, s = layer.stride, oc = layer.channels;
    const int ohw = (hw - k) / s + 1;
    std::vector<double> out(std::size_t(oc) * ohw * ohw);
    for (int co = 0; co < oc; ++co)
      for (int oy = 0; oy < ohw; ++oy)
        for (int ox = 0; ox < ohw; ++ox) {
          double sum = b[co];
          for (int ci = 0; ci < ch; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                double x = act[(std::size_t(ci) * hw + oy * s + ky) * hw + ox * s + kx];
                double wv = w[((std::size_t(ky) * k + kx) * ch + ci) * oc + co];
                sum += x * wv;
              }
          out[(std::size_t(co) * ohw + oy) * ohw + ox] = std::max(sum, 0.0);
        }
    act = std::move(out);
    hw = ohw;
    ch = oc;
  }
  // flatten in (y, x, c) order
  std::vector<double> flat(act.size());
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x)
        flat[(std::size_t(y) * hw + x) * ch + c] = act[(std::size_t(c) * hw + y) * hw + x];
  auto dense = [&](const std::vector<double>& in, int n_out, bool relu) {
    const auto& w = params.tensors[t].data;
    const auto& b = params.tensors[t + 1].data;
    t += 2;
    std::vector<double> out(n_out);
    for (int o = 0; o < n_out; ++o) {
      double sum = b[o];
      for (std::size_t i = 0; i < in.size(); ++i) sum += in[i] * w[i * n_out + o];
      out[o] = relu ? std::max(sum, 0.0) : sum;
    }
    return out;
  };
  for (int width : arch.dense) flat = dense(flat, width, true);
  const std::size_t head_t = t;
  auto logits = dense(flat, kNumActions, false);
  t = int(head_t) + 2;
  auto value = dense(flat, 1, false);
  PolicyValueOutput<double> out;
  std::copy(logits.begin(), logits.end(), out.logits.begin());
  out.value = value[0];
  return out;
}

/// Random one-hot-ish observation with the structure of a real maze frame.
inline std::vector<float> random_observation(int grid, Rng& rng) {
  std::vector<float> obs(std::size_t(kObservationChannels) * grid * grid, 0.0f);
  const std::size_t plane = std::size_t(grid) * grid;
  for (std::size_t i = 0; i < plane; ++i) {
    int r = int(i) / grid, c = int(i) % grid;
    bool border = r == 0 || c == 0 || r == grid - 1 || c == grid - 1;
    if (border || rng.bernoulli(0.1)) obs[i] = 1.0f;
  }
  for (int ch = 1; ch < kObservationChannels; ++ch)
    obs[ch * plane + 1 + rng.below(plane - 2)] = 1.0f;
  return obs;
}

/// Sign pattern of every hidden pre-activation; changes when a perturbation
/// crosses a ReLU kink.
inline std::vector<bool> relu_pattern(const ForwardCache<double>& cache) {
  std::vector<bool> out;
  for (std::size_t l = 1; l < cache.acts.size(); ++l)
    for (double v : cache.acts[l]) out.push_back(v > 0.0);
  return out;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int one_sided = 0;      // checked with a one-sided difference
  int skipped_kinks = 0;  // both directions crossed a kink; resampled
};

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

/// Compares backprop against finite differences of the scalar
/// L = sum_k c_k * logit_k + d * value for random (c, d), on the float64
/// network. Parameters are drawn round-robin across tensors.
///
/// L is piecewise linear in any single parameter, with kinks where a hidden
/// ReLU changes sign. The central difference is used when neither the +h nor
/// the -h evaluation changes the ReLU sign pattern; when exactly one side
/// does, the one-sided difference on the other side is used; when both do,
/// the point is not differentiable at scale h and a new parameter is drawn.
inline GradCheckResult check_network_gradients(const ArchSpec& arch, int grid,
                                               std::uint64_t seed, int samples = 200,
                                               double h = 1e-3) {
  Rng rng(seed);
  auto params = init_params(arch, grid, seed).cast<double>();
  // non-zero biases so bias gradients are exercised away from 0
  for (auto& t : params.tensors)
    if (t.shape.size() == 1)
      for (double& v : t.data) v = rng.uniform(-0.05, 0.05);
  PolicyValueNet<double> net(arch, grid, params);
  auto obs = random_observation(grid, rng);
  std::array<double, kNumActions> c{};
  for (double& v : c) v = rng.uniform(-1, 1);
  const double d = rng.uniform(-1, 1);

  ForwardCache<double> cache;
  net.forward(obs, cache);
  const auto base_pattern = relu_pattern(cache);
  const double base_loss = [&] {
    double l = d * cache.value;
    for (int k = 0; k < kNumActions; ++k) l += c[k] * cache.logits[k];
    return l;
  }();
  auto grads = net.params().zeros_like();
  net.backward(cache, c, d, grads);

  ForwardCache<double> fc;
  auto loss_at = [&](std::size_t tensor, std::size_t idx, double value, bool& kink) {
    auto& p = net.mutable_params();
    const double orig = p.tensors[tensor].data[idx];
    p.tensors[tensor].data[idx] = value;
    net.forward(obs, fc);
    net.mutable_params().tensors[tensor].data[idx] = orig;
    kink = relu_pattern(fc) != base_pattern;
    double l = d * fc.value;
    for (int k = 0; k < kNumActions; ++k) l += c[k] * fc.logits[k];
    return l;
  };

  GradCheckResult res;
  const std::size_t n_tensors = grads.tensors.size();
  for (std::size_t attempt = 0; res.checked < samples && attempt < std::size_t(samples) * 50;
       ++attempt) {
    const std::size_t tensor = attempt % n_tensors;
    const std::size_t idx = rng.below(grads.tensors[tensor].size());
    const double orig = net.params().tensors[tensor].data[idx];
    bool kink_p = false, kink_m = false;
    const double lp = loss_at(tensor, idx, orig + h, kink_p);
    const double lm = loss_at(tensor, idx, orig - h, kink_m);
    double numeric;
    if (!kink_p && !kink_m) {
      numeric = (lp - lm) / (2 * h);
    } else if (kink_p != kink_m) {
      numeric = kink_p ? (base_loss - lm) / h : (lp - base_loss) / h;
      ++res.one_sided;
    } else {
      ++res.skipped_kinks;
      continue;
    }
    res.max_rel_error =
        std::max(res.max_rel_error, relative_error(numeric, grads.tensors[tensor].data[idx]));
    ++res.checked;
  }
  return res;
}

}  // namespace gridlab::testing
