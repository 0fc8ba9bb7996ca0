#pragma once

#include "moe/forward.hpp"

namespace moe {

/// Per-sample gradients of the surrogate loss 1 - y f(x) with the selection
/// sets held fixed. Pruned experts carry zero gradients (they are never
/// updated).
struct GradientBundle {
  std::vector<Vec> router;  // k x d
  std::vector<Vec> neuron;  // k x (m*d), same neuron layout as MoELayer
  double loss{0.0};

  static GradientBundle zeros(const MoELayer& layer);
  void set_zero();
};

/// Closed-form gradients for the analyzed model. Expert-choice follows the
/// appendix formulas: neuron gradient -y a^(s) sum_j G_j x^(j) 1{<w_r,x>=0+},
/// router gradient -y a^(s) sum_j sigma_j G_j (x^(j) - xbar) with xbar the
/// gate-weighted token mean (an algebraic rewrite of the pairwise coupling
/// sum). Token-choice differentiates the per-token softmax the same way,
/// including the cross-expert coupling through the shared denominator.
GradientBundle sample_gradients(const MoELayer& layer, const Sample& sample,
                                const RoutingConfig& cfg, const PruneMask& mask);

/// Adds weight * sample_gradients(...) into `into` (loss included). The hot
/// path for batch accumulation; summation order is the caller's.
void accumulate_sample_gradients(const MoELayer& layer, const Sample& sample,
                                 const RoutingConfig& cfg, const PruneMask& mask, double weight,
                                 GradientBundle& into);

struct FiniteDiffResult {
  GradientBundle grads;
  bool selection_flip{false};  // some perturbation changed a top-l set
  int flipped_coordinates{0};
};

/// Central differences (l(w+eps) - l(w-eps)) / 2 eps per coordinate, with
/// selection sets recomputed and compared against the unperturbed ones.
/// Verification oracle; used only by tests and the gradcheck command.
FiniteDiffResult finite_difference_gradients(const MoELayer& layer, const Sample& sample,
                                             const RoutingConfig& cfg, const PruneMask& mask,
                                             double eps);

/// Relative error ||a - b|| / max(||a||, ||b||) over retained experts'
/// coordinates; 0 when both sides vanish.
double relative_gradient_error(const GradientBundle& a, const GradientBundle& b,
                               const PruneMask& mask);

}  // namespace moe
