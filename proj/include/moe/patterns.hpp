#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "moe/rng.hpp"
#include "moe/util.hpp"

namespace moe {

enum class PatternMode { StandardBasis, RandomOrthonormal };

/// Orthonormal token dictionary: d unit patterns in R^d. Pattern 0 is the
/// class-1 task pattern, pattern 1 the class-2 task pattern; patterns 2..d-1
/// are task-irrelevant with a per-pattern sampling probability. Immutable
/// after construction and safe to share across threads.
class PatternSet {
 public:
  static constexpr double kOrthoTol = 1e-12;

  int dim() const { return d_; }
  PatternMode mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }

  int task1_index() const { return 0; }
  int task2_index() const { return 1; }
  int task_index(int label) const { return label > 0 ? task1_index() : task2_index(); }
  bool is_task(int pattern) const { return pattern == 0 || pattern == 1; }

  const Vec& pattern(int i) const { return patterns_[i]; }

  /// <w, p_i>; O(1) for the standard basis.
  double dot(std::span<const double> w, int pattern) const {
    if (mode_ == PatternMode::StandardBasis) return w[pattern];
    return moe::dot(w, patterns_[pattern]);
  }

  /// w += c * p_i; O(1) for the standard basis.
  void add_scaled(std::span<double> w, int pattern, double c) const {
    if (mode_ == PatternMode::StandardBasis) {
      w[pattern] += c;
      return;
    }
    const Vec& p = patterns_[pattern];
    for (int i = 0; i < d_; ++i) w[i] += c * p[i];
  }

  /// Sampling distribution over the d-2 irrelevant patterns (index 0 of the
  /// returned vector corresponds to pattern index 2).
  const std::vector<double>& irrelevant_probs() const { return irr_probs_; }

  /// Draws one irrelevant pattern index (in 2..d-1).
  int sample_irrelevant(Philox& rng) const;

  /// Checks unit norms, pairwise orthogonality and the probability bounds;
  /// throws NumericError / ConfigError on violation.
  void validate(double max_prob_factor = 2.0) const;

  void save(const std::filesystem::path& path) const;
  static PatternSet load(const std::filesystem::path& path);

  friend PatternSet build_pattern_set(int d, PatternMode mode, std::uint64_t seed,
                                      std::vector<double> irrelevant_probs,
                                      double max_prob_factor);

 private:
  PatternSet() = default;

  int d_{0};
  PatternMode mode_{PatternMode::StandardBasis};
  std::uint64_t seed_{0};
  std::vector<Vec> patterns_;
  std::vector<double> irr_probs_;
  std::vector<double> irr_cum_;  // cumulative sums, empty when uniform
  bool uniform_{true};
};

/// Builds the pattern dictionary. Empty `irrelevant_probs` means uniform
/// 1/(d-2); custom probabilities must be nonnegative, sum to 1 and each stay
/// below max_prob_factor/d.
PatternSet build_pattern_set(int d, PatternMode mode, std::uint64_t seed,
                             std::vector<double> irrelevant_probs = {},
                             double max_prob_factor = 2.0);

using PatternSetPtr = std::shared_ptr<const PatternSet>;

}  // namespace moe
