#include "moe/forward.hpp"

#include <algorithm>

#include "moe/error.hpp"

namespace moe {

namespace {

void check_provenance(const MoELayer& layer, const Sample& sample, const GatingOutput& gating) {
  if (gating.k != layer.k || gating.n != sample.n() || gating.routing.rows != layer.k ||
      gating.routing.cols != sample.n())
    throw ContractError("gating output does not match this layer and sample");
}

}  // namespace

double hidden_activation_sum(const MoELayer& layer, const Sample& sample, int s, int j) {
  double acc = 0.0;
  for (int r = 0; r < layer.m; ++r) {
    const double z = sample.token_dot(layer.neuron(s, r), j);
    if (z > 0.0) acc += z;
  }
  return acc;
}

Mat expert_forward(const MoELayer& layer, const Sample& sample, const GatingOutput& gating,
                   const PruneMask& mask) {
  check_provenance(layer, sample, gating);
  if (mask.k != layer.k) throw ContractError("prune mask size does not match layer");

  Mat out(sample.n(), layer.d_out);
  std::vector<double> h(static_cast<std::size_t>(layer.m));
  for (const GateEntry& e : gating.gates) {
    if (!mask.retains(e.expert)) continue;
    if (layer.analyzed) {
      out(e.token, 0) += layer.heads[e.expert] * e.value *
                         hidden_activation_sum(layer, sample, e.expert, e.token);
      continue;
    }
    for (int r = 0; r < layer.m; ++r)
      h[static_cast<std::size_t>(r)] =
          std::max(0.0, sample.token_dot(layer.neuron(e.expert, r), e.token));
    const Vec& w = layer.w2[static_cast<std::size_t>(e.expert)];
    for (int o = 0; o < layer.d_out; ++o) {
      double acc = 0.0;
      const double* row = w.data() + static_cast<std::size_t>(o) * layer.m;
      for (int r = 0; r < layer.m; ++r) acc += row[r] * h[static_cast<std::size_t>(r)];
      out(e.token, o) += acc * e.value;
    }
  }
  return out;
}

double classify(const MoELayer& layer, const Sample& sample, const GatingOutput& gating) {
  if (!layer.analyzed) throw ContractError("classify requires an analyzed-mode layer");
  check_provenance(layer, sample, gating);
  double f = 0.0;
  for (const GateEntry& e : gating.gates)
    f += layer.heads[e.expert] * e.value * hidden_activation_sum(layer, sample, e.expert, e.token);
  return f;
}

double classify(const MoELayer& layer, const Sample& sample, const RoutingConfig& cfg,
                const PruneMask& mask) {
  if (!layer.analyzed) throw ContractError("classify requires an analyzed-mode layer");
  const GatingOutput gating = compute_gating(layer, sample, cfg, mask);
  return classify(layer, sample, gating);
}

}  // namespace moe
