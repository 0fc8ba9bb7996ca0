#pragma once

#include <vector>

#include "moe/data.hpp"
#include "moe/layer.hpp"

namespace moe {

struct GateEntry {
  int expert;
  int token;
  double value;
};

/// Sparse gating result for one sample. `selected` holds the full top-l index
/// sets (token-choice: per token the chosen experts, including pruned ones
/// because they stay in the softmax denominator; expert-choice: per retained
/// expert the chosen tokens, empty for pruned experts). `gates` lists only
/// the non-zero gating values.
struct GatingOutput {
  RoutingMode mode{};
  int k{0};
  int n{0};
  int l{0};
  Mat routing;                             // k x n routing values g_j^(s)
  std::vector<std::vector<int>> selected;  // ascending indices
  std::vector<GateEntry> gates;            // token-major (tc) / expert-major (ec)

  /// Gate value, 0 when the pair is not routed. Linear scan; fine for tests
  /// and report code, hot paths iterate `gates` directly.
  double gate(int expert, int token) const;

  /// Gate mass per token (sum over experts), used by invariant checks.
  std::vector<double> token_mass() const;
};

/// Routing-value matrix: entry (s, j) = <w_s, x^(j)>.
Mat routing_values(const MoELayer& layer, const Sample& sample);

/// Token-choice gating: per token the top-l experts by routing value (ties
/// to the lower expert index), softmax over the selected set. Pruned experts
/// keep their place in the denominator but emit no gate.
GatingOutput gate_token_choice(const Mat& routing, const RoutingConfig& cfg, const PruneMask& mask);

/// Expert-choice gating: per retained expert the top-l tokens (ties to the
/// lower token index), softmax over the selected tokens. Pruned experts are
/// dropped entirely, router included.
GatingOutput gate_expert_choice(const Mat& routing, const RoutingConfig& cfg, const PruneMask& mask);

/// Dispatch on cfg.mode over a freshly computed routing matrix.
GatingOutput compute_gating(const MoELayer& layer, const Sample& sample, const RoutingConfig& cfg,
                            const PruneMask& mask);

/// Top-l indices by value, descending, ties broken by lower index; returned
/// sorted ascending so downstream summation order is deterministic.
std::vector<int> top_indices(std::span<const double> values, int l);

}  // namespace moe
