#pragma once

#include "moe/gating.hpp"

namespace moe {

/// Sum of ReLU hidden activations of expert s on token j,
/// sigma_j^(s) = sum_r ReLU(<w_r^(s), x^(j)>).
double hidden_activation_sum(const MoELayer& layer, const Sample& sample, int s, int j);

/// Sparse layer output: n tokens of dimension d_out. Only non-zero gates are
/// evaluated; a token with no retained routed expert comes out as the zero
/// vector.
Mat expert_forward(const MoELayer& layer, const Sample& sample, const GatingOutput& gating,
                   const PruneMask& mask);

/// Analyzed-model output f(x) = sum_j sum_{s in S_k'} a^(s) G_j^(s) sigma_j^(s);
/// the prediction is sign(f).
double classify(const MoELayer& layer, const Sample& sample, const GatingOutput& gating);
double classify(const MoELayer& layer, const Sample& sample, const RoutingConfig& cfg,
                const PruneMask& mask);

}  // namespace moe
