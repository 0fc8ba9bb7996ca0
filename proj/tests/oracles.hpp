// Test-only oracles, kept independent of the library's sparse fast paths:
// everything here materializes dense token vectors and walks the defining
// sums directly.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "moe/forward.hpp"

namespace oracle {

using moe::MoELayer;
using moe::PatternSetPtr;
using moe::Sample;
using moe::Vec;

inline Vec dense_token(const Sample& s, int j) {
  return s.patterns->pattern(static_cast<int>(s.tokens[static_cast<std::size_t>(j)]));
}

inline double dense_dot(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Entry-by-entry routing values.
inline std::vector<std::vector<double>> routing(const MoELayer& layer, const Sample& s) {
  std::vector<std::vector<double>> g(static_cast<std::size_t>(layer.k),
                                     std::vector<double>(static_cast<std::size_t>(s.n())));
  for (int e = 0; e < layer.k; ++e)
    for (int j = 0; j < s.n(); ++j)
      g[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)] =
          dense_dot(layer.routers[static_cast<std::size_t>(e)], dense_token(s, j));
  return g;
}

// Dense evaluation of the layer output with explicit zero gates: the full
// sum over experts of W2 ReLU(W1^T x) G, no sparsity shortcuts.
inline std::vector<Vec> dense_forward(const MoELayer& layer, const Sample& s,
                                      const std::vector<std::vector<double>>& gates) {
  std::vector<Vec> out(static_cast<std::size_t>(s.n()), Vec(static_cast<std::size_t>(layer.d_out), 0.0));
  for (int j = 0; j < s.n(); ++j) {
    const Vec x = dense_token(s, j);
    for (int e = 0; e < layer.k; ++e) {
      const double gate = gates[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)];
      Vec h(static_cast<std::size_t>(layer.m));
      for (int r = 0; r < layer.m; ++r) {
        double z = 0.0;
        for (int t = 0; t < layer.d; ++t)
          z += layer.hidden[static_cast<std::size_t>(e)][static_cast<std::size_t>(r) * layer.d + t] *
               x[static_cast<std::size_t>(t)];
        h[static_cast<std::size_t>(r)] = std::max(0.0, z);
      }
      for (int o = 0; o < layer.d_out; ++o) {
        double acc = 0.0;
        for (int r = 0; r < layer.m; ++r) {
          const double w2 = layer.analyzed
                                ? layer.heads[static_cast<std::size_t>(e)]
                                : layer.w2[static_cast<std::size_t>(e)]
                                          [static_cast<std::size_t>(o) * layer.m + r];
          acc += w2 * h[static_cast<std::size_t>(r)];
        }
        out[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)] += acc * gate;
      }
    }
  }
  return out;
}

// Dense k x n gate table from a GatingOutput (zero where unrouted).
inline std::vector<std::vector<double>> dense_gates(const moe::GatingOutput& gating) {
  std::vector<std::vector<double>> g(static_cast<std::size_t>(gating.k),
                                     std::vector<double>(static_cast<std::size_t>(gating.n), 0.0));
  for (const moe::GateEntry& e : gating.gates)
    g[static_cast<std::size_t>(e.expert)][static_cast<std::size_t>(e.token)] = e.value;
  return g;
}

// Random analyzed instance helpers shared by the gradient and metric tests.
struct Instance {
  PatternSetPtr ps;
  MoELayer layer;
  Sample sample;
  moe::RoutingConfig cfg;
  moe::PruneMask mask;
};

inline Instance random_instance(moe::Philox& rng, moe::RoutingMode mode, bool partial_mask = false,
                                double weight_std = 0.4) {
  Instance inst;
  const int d = 6 + rng.next_index(11);
  const int n = 3 + rng.next_index(6);
  const int k = 2 + rng.next_index(3);
  const int m = 2 + rng.next_index(5);
  inst.ps = std::make_shared<const moe::PatternSet>(moe::build_pattern_set(
      std::max(d, n),
      rng.next_index(2) ? moe::PatternMode::RandomOrthonormal : moe::PatternMode::StandardBasis,
      rng.next_u64()));
  inst.layer = moe::make_analyzed_layer(k, m, inst.ps->dim(), 1 + rng.next_index(k - 1));
  moe::init_gaussian(inst.layer, weight_std, weight_std, rng);
  inst.sample = moe::sample_input(inst.ps, n, rng.next_index(2) ? 1 : -1, rng);
  const int lmax = mode == moe::RoutingMode::TokenChoice ? std::min(2, k) : std::min(2, n);
  inst.cfg = {mode, 1 + rng.next_index(lmax)};
  if (partial_mask) {
    std::vector<int> retained;
    for (int s = 0; s < k; ++s)
      if (rng.next_index(2)) retained.push_back(s);
    if (retained.empty()) retained.push_back(rng.next_index(k));
    inst.mask = moe::PruneMask::from_retained(k, retained);
  } else {
    inst.mask = moe::PruneMask::full(k);
  }
  return inst;
}

}  // namespace oracle
