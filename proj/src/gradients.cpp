#include "moe/gradients.hpp"

#include <algorithm>
#include <cmath>

#include "moe/error.hpp"
#include "moe/losses.hpp"

namespace moe {

GradientBundle GradientBundle::zeros(const MoELayer& layer) {
  GradientBundle g;
  g.router.assign(static_cast<std::size_t>(layer.k), Vec(static_cast<std::size_t>(layer.d), 0.0));
  g.neuron.assign(static_cast<std::size_t>(layer.k),
                  Vec(static_cast<std::size_t>(layer.m) * layer.d, 0.0));
  return g;
}

void GradientBundle::set_zero() {
  for (Vec& v : router) std::fill(v.begin(), v.end(), 0.0);
  for (Vec& v : neuron) std::fill(v.begin(), v.end(), 0.0);
  loss = 0.0;
}

namespace {

// Shared accumulation core. `weight` scales gradients and loss.
void accumulate(const MoELayer& layer, const Sample& sample, const RoutingConfig& cfg,
                const PruneMask& mask, double weight, GradientBundle& out) {
  if (!layer.analyzed) throw ContractError("gradients are defined for analyzed-mode layers");
  const PatternSet& ps = *sample.patterns;
  const int y = sample.label;
  const GatingOutput gating = compute_gating(layer, sample, cfg, mask);

  auto neuron_grad_term = [&](int s, int token, double gate) {
    // -y a^(s) G x^(j) on every neuron active at x^(j); ReLU'(0) taken as 1.
    const double c = -weight * y * layer.heads[s] * gate;
    for (int r = 0; r < layer.m; ++r) {
      if (sample.token_dot(layer.neuron(s, r), token) >= 0.0) {
        Vec& g = out.neuron[static_cast<std::size_t>(s)];
        ps.add_scaled({g.data() + static_cast<std::size_t>(r) * layer.d,
                       static_cast<std::size_t>(layer.d)},
                      static_cast<int>(sample.tokens[static_cast<std::size_t>(token)]), c);
      }
    }
  };

  double f = 0.0;

  if (cfg.mode == RoutingMode::ExpertChoice) {
    // Entries are expert-major; process each retained expert's block.
    std::size_t i = 0;
    while (i < gating.gates.size()) {
      const int s = gating.gates[i].expert;
      std::size_t end = i;
      while (end < gating.gates.size() && gating.gates[end].expert == s) ++end;

      const double a = layer.heads[s];
      double sbar = 0.0;  // sum_j G_j sigma_j
      std::vector<double> sigma(end - i);
      for (std::size_t t = i; t < end; ++t) {
        sigma[t - i] = hidden_activation_sum(layer, sample, s, gating.gates[t].token);
        sbar += gating.gates[t].value * sigma[t - i];
        f += a * gating.gates[t].value * sigma[t - i];
      }
      Vec& rg = out.router[static_cast<std::size_t>(s)];
      for (std::size_t t = i; t < end; ++t) {
        const GateEntry& e = gating.gates[t];
        neuron_grad_term(s, e.token, e.value);
        // -y a [ sum_j G_j sigma_j x_j - sbar sum_i G_i x_i ]
        const double c = -weight * y * a * e.value * (sigma[t - i] - sbar);
        ps.add_scaled(rg, static_cast<int>(sample.tokens[static_cast<std::size_t>(e.token)]), c);
      }
      i = end;
    }
  } else {
    // Token-choice: entries are token-major. Per token j the retained experts
    // of J_j share one softmax; coupling runs through the common denominator.
    std::size_t i = 0;
    while (i < gating.gates.size()) {
      const int j = gating.gates[i].token;
      std::size_t end = i;
      while (end < gating.gates.size() && gating.gates[end].token == j) ++end;

      double cj = 0.0;  // sum over retained s' in J_j of a^(s') sigma_j^(s') G_j^(s')
      std::vector<double> sigma(end - i);
      for (std::size_t t = i; t < end; ++t) {
        const GateEntry& e = gating.gates[t];
        sigma[t - i] = hidden_activation_sum(layer, sample, e.expert, j);
        cj += layer.heads[e.expert] * sigma[t - i] * e.value;
        f += layer.heads[e.expert] * e.value * sigma[t - i];
      }
      const int pattern = static_cast<int>(sample.tokens[static_cast<std::size_t>(j)]);
      for (std::size_t t = i; t < end; ++t) {
        const GateEntry& e = gating.gates[t];
        neuron_grad_term(e.expert, j, e.value);
        const double c =
            -weight * y * e.value * (layer.heads[e.expert] * sigma[t - i] - cj);
        ps.add_scaled(out.router[static_cast<std::size_t>(e.expert)], pattern, c);
      }
      i = end;
    }
  }

  out.loss += weight * loss_surrogate(f, y);
}

}  // namespace

GradientBundle sample_gradients(const MoELayer& layer, const Sample& sample,
                                const RoutingConfig& cfg, const PruneMask& mask) {
  GradientBundle g = GradientBundle::zeros(layer);
  accumulate(layer, sample, cfg, mask, 1.0, g);
  return g;
}

void accumulate_sample_gradients(const MoELayer& layer, const Sample& sample,
                                 const RoutingConfig& cfg, const PruneMask& mask, double weight,
                                 GradientBundle& into) {
  accumulate(layer, sample, cfg, mask, weight, into);
}

namespace {

bool same_selection(const GatingOutput& a, const GatingOutput& b) {
  return a.selected == b.selected;
}

}  // namespace

FiniteDiffResult finite_difference_gradients(const MoELayer& layer, const Sample& sample,
                                             const RoutingConfig& cfg, const PruneMask& mask,
                                             double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite differences require eps > 0");
  if (!layer.analyzed) throw ContractError("gradients are defined for analyzed-mode layers");

  FiniteDiffResult res;
  res.grads = GradientBundle::zeros(layer);
  const GatingOutput base = compute_gating(layer, sample, cfg, mask);
  const int y = sample.label;

  MoELayer work = layer;
  auto probe = [&](double* coord) {
    const double saved = *coord;
    *coord = saved + eps;
    const GatingOutput gp = compute_gating(work, sample, cfg, mask);
    const double lp = loss_surrogate(classify(work, sample, gp), y);
    *coord = saved - eps;
    const GatingOutput gm = compute_gating(work, sample, cfg, mask);
    const double lm = loss_surrogate(classify(work, sample, gm), y);
    *coord = saved;
    if (!same_selection(gp, base) || !same_selection(gm, base)) {
      res.selection_flip = true;
      ++res.flipped_coordinates;
    }
    return (lp - lm) / (2.0 * eps);
  };

  for (int s = 0; s < layer.k; ++s) {
    for (int i = 0; i < layer.d; ++i)
      res.grads.router[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] =
          probe(&work.routers[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]);
    for (std::size_t i = 0; i < work.hidden[static_cast<std::size_t>(s)].size(); ++i)
      res.grads.neuron[static_cast<std::size_t>(s)][i] =
          probe(&work.hidden[static_cast<std::size_t>(s)][i]);
  }
  res.grads.loss = loss_surrogate(classify(layer, sample, base), y);
  return res;
}

double relative_gradient_error(const GradientBundle& a, const GradientBundle& b,
                               const PruneMask& mask) {
  double diff2 = 0.0, na2 = 0.0, nb2 = 0.0;
  auto add = [&](const Vec& x, const Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      diff2 += d * d;
      na2 += x[i] * x[i];
      nb2 += y[i] * y[i];
    }
  };
  for (int s = 0; s < mask.k; ++s) {
    if (!mask.retains(s)) continue;
    add(a.router[static_cast<std::size_t>(s)], b.router[static_cast<std::size_t>(s)]);
    add(a.neuron[static_cast<std::size_t>(s)], b.neuron[static_cast<std::size_t>(s)]);
  }
  const double denom = std::max(std::sqrt(na2), std::sqrt(nb2));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff2) / denom;
}

}  // namespace moe
