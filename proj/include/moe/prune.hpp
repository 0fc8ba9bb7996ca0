#pragma once

#include <filesystem>
#include <string>

#include "moe/data.hpp"
#include "moe/layer.hpp"
#include "moe/rng.hpp"

namespace moe {

enum class Grouping { BySignGroup, WholeLayer };

enum class PruneCriterion {
  Delta,            // change of router l2 norm (the method under study)
  Importance,       // top-1 token fraction x mean confidence (token-choice only)
  RouterMagnitude,  // ||w_s^(T)||
  NeuronMagnitude,  // mean_r ||w_r^(s,T)||
  NeuronChange,     // mean_r (||w_r^(s,T)|| - ||w_r^(s,0)||)
  Random,
};

std::string to_string(PruneCriterion c);
PruneCriterion parse_criterion(const std::string& name);

struct PruneDecision {
  std::vector<double> scores;  // the ranking scores (deltas for the main criterion)
  double rho{0.0};
  Grouping grouping{Grouping::BySignGroup};
  PruneMask retained;
};

struct BaselineScores {
  bool importance_defined{false};  // importance needs token-choice routing
  std::vector<double> importance_score;
  std::vector<double> top1_fraction;
  std::vector<double> confidence;
  std::vector<double> router_magnitude;
  std::vector<double> avg_neuron_magnitude;
  std::vector<double> avg_change_neuron_magnitude;
};

/// Delta_s = ||w_s^(T)|| - ||w_s^(0)||, per expert; may be negative.
std::vector<double> router_norm_change(const MoELayer& layer0, const MoELayer& layerT);

/// Keeps the top max(1, floor((1-rho) * group size)) experts per group by
/// score (ties to the lower index). WholeLayer treats all experts as one
/// group and ignores `group_of`.
PruneDecision select_retained(const std::vector<double>& scores, double rho, Grouping grouping,
                              const std::vector<int>& group_of);

/// Scores of the comparison criteria. Importance / top-1 / confidence are
/// computed under token-choice with the fine-tuned routers over `data`; under
/// expert-choice they are reported as absent (NaN).
BaselineScores baseline_scores(const MoELayer& layer0, const MoELayer& layerT, const Dataset& data,
                               const RoutingConfig& route);

/// Uniformly random retained set with the same per-group cardinalities as
/// select_retained would produce.
PruneMask random_mask(int k, double rho, const std::vector<int>& group_of, Grouping grouping,
                      Philox& rng);

/// Score table CSV: one row per expert with every criterion plus the
/// retained flag of `decision`.
void write_score_csv(const std::filesystem::path& path, const std::vector<double>& deltas,
                     const std::vector<int>& group_of, const BaselineScores& baselines,
                     const PruneDecision& decision);

}  // namespace moe
