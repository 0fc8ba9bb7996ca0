#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "moe/rng.hpp"
#include "moe/util.hpp"

namespace moe {

enum class RoutingMode { TokenChoice, ExpertChoice };

struct RoutingConfig {
  RoutingMode mode{RoutingMode::ExpertChoice};
  int l{1};
};

/// Sparse MoE layer: k routers, k experts of m hidden ReLU neurons each.
/// `analyzed` layers use fixed scalar heads a^(s) in {+1,-1} (d_out = 1);
/// general layers carry a d_out x m output matrix per expert.
struct MoELayer {
  int k{0};
  int m{0};
  int d{0};
  int d_out{1};
  bool analyzed{true};

  std::vector<Vec> routers;   // k vectors of dim d
  std::vector<Vec> hidden;    // k blocks of m*d; neuron r of expert s at [r*d, (r+1)*d)
  std::vector<double> heads;  // analyzed mode: k values in {+1,-1}
  std::vector<Vec> w2;        // general mode: k blocks of d_out*m, row-major

  std::span<const double> neuron(int s, int r) const {
    return {hidden[s].data() + static_cast<std::size_t>(r) * d, static_cast<std::size_t>(d)};
  }
  std::span<double> neuron(int s, int r) {
    return {hidden[s].data() + static_cast<std::size_t>(r) * d, static_cast<std::size_t>(d)};
  }

  /// Sign groups of an analyzed layer: group 0 is S1 (a=+1), group 1 is S2.
  std::vector<int> sign_groups() const;

  bool same_shape(const MoELayer& other) const {
    return k == other.k && m == other.m && d == other.d && d_out == other.d_out &&
           analyzed == other.analyzed;
  }

  /// Structural and invariant checks (shapes, finite weights, head signs,
  /// both sign groups non-empty in analyzed mode).
  void validate() const;

  void save(const std::filesystem::path& path) const;
  static MoELayer load(const std::filesystem::path& path);
};

/// Analyzed-mode layer with zeroed weights; the first `positive` experts get
/// head +1 and the rest -1.
MoELayer make_analyzed_layer(int k, int m, int d, int positive);

/// General layer with zeroed weights.
MoELayer make_general_layer(int k, int m, int d, int d_out);

/// Gaussian initialization of routers and hidden neurons (general-mode w2
/// too); heads are untouched.
void init_gaussian(MoELayer& layer, double router_std, double neuron_std, Philox& rng);

/// Retained-expert set S_k'. Experts outside the mask produce no output;
/// token-choice keeps their routers in the softmax denominator, expert-choice
/// drops them entirely.
struct PruneMask {
  int k{0};
  std::vector<char> keep;

  static PruneMask full(int k);
  static PruneMask from_retained(int k, const std::vector<int>& retained);

  bool retains(int s) const { return keep[static_cast<std::size_t>(s)] != 0; }
  int retained_count() const;
  std::vector<int> retained_indices() const;
  bool is_full() const { return retained_count() == k; }

  void validate() const;
};

}  // namespace moe
