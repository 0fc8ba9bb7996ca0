#pragma once

#include <filesystem>

#include "moe/gating.hpp"
#include "moe/prune.hpp"

namespace moe {

/// Monte Carlo estimates of the proficiency measures p1, p2: the probability
/// that the expert routes the class task pattern with gating value >= 1/l.
struct ProficiencyReport {
  std::vector<double> p1;          // per expert, over class-1 samples
  std::vector<double> p2;          // per expert, over class-2 samples
  long samples_per_class{0};       // 0 marks exact enumeration
  std::vector<double> p1_stderr;   // sqrt(p (1-p) / N)
  std::vector<double> p2_stderr;

  void save_csv(const std::filesystem::path& path) const;
};

struct ProjectionReport {
  Mat router_components;        // k x d, entry (s, i) = <w_s, p_i>
  Mat neuron_task1;             // k x m, <w_r^(s), o1>
  Mat neuron_task2;             // k x m
  Mat neuron_irrelevant_max;    // k x m, max over irrelevant patterns

  void save_csv(const std::filesystem::path& path) const;
  /// Dense k x d matrix of router components, whitespace separated, for
  /// external plotting.
  void save_matrix(const std::filesystem::path& path) const;
};

enum class ExpertClass { Important, Unimportant, Ambiguous };

/// Measured analogs of the pretrained-model assumption constants.
struct AssumptionReport {
  double c1{0.0};  // max_s ||w_s^(0)||
  double c2{0.0};  // max_{s,r} ||w_r^(s,0)||
  std::vector<ExpertClass> expert_class;     // per expert, judged by its group's proficiency
  std::vector<double> separation_margin;     // min_q |<w_s^(0), o_task - q>|; NaN unless important
  std::vector<double> activated_fraction;    // fraction of neurons with <w_r^(s,0), o_task> >= 0
  double gamma{0.0};  // min over sign groups of the unimportant fraction
  double important_threshold{0.5};
  double unimportant_threshold{0.05};

  void save_csv(const std::filesystem::path& path) const;
};

struct FlopsReport {
  long long routing_flops{0};
  long long expert_flops{0};
  long long total_flops{0};
  long long parameter_count{0};
};

/// Evaluates the proficiency definition on an explicit sample set; each
/// sample contributes to p1 or p2 according to its label.
ProficiencyReport proficiency_on_samples(const MoELayer& layer, std::span<const Sample> samples,
                                         const RoutingConfig& route);

/// Monte Carlo proficiency over num_samples fresh draws per class.
ProficiencyReport estimate_proficiency(const MoELayer& layer, const PatternSetPtr& ps, int n,
                                       const RoutingConfig& route, int num_samples, Philox& rng);

/// Exact proficiency by enumerating every (task position, irrelevant fill)
/// sequence with its probability. Cost n * (d-2)^(n-1); refuses instances
/// above max_terms. Oracle for the Monte Carlo path.
ProficiencyReport exact_proficiency(const MoELayer& layer, const PatternSetPtr& ps, int n,
                                    const RoutingConfig& route, long max_terms = 2'000'000);

ProjectionReport projections(const MoELayer& layer, const PatternSet& ps);

/// Classifies experts by their group's proficiency at the thresholds and
/// measures the assumption constants on layer0.
AssumptionReport check_assumptions(const MoELayer& layer0, const PatternSet& ps,
                                   const ProficiencyReport& proficiency0,
                                   double important_threshold, double unimportant_threshold);

/// Fraction of samples with y f(x) > 0; f = 0 counts as an error.
double test_accuracy(const MoELayer& layer, const PruneMask& mask, const Dataset& data,
                     const RoutingConfig& route);

/// Multiply-add FLOPs per sample (1 madd = 2 FLOPs) and pruned parameter
/// count. Routed-pair counts are taken from `gating` when given, otherwise
/// worst case. Softmax and ReLU costs are excluded (O(n l), immaterial).
FlopsReport flops_per_sample(int k, int m, int d, int d_out, int n, const RoutingConfig& route,
                             const PruneMask& mask, const GatingOutput* gating = nullptr);

}  // namespace moe
