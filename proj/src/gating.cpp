#include "moe/gating.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moe/error.hpp"

namespace moe {

double GatingOutput::gate(int expert, int token) const {
  for (const GateEntry& e : gates)
    if (e.expert == expert && e.token == token) return e.value;
  return 0.0;
}

std::vector<double> GatingOutput::token_mass() const {
  std::vector<double> mass(static_cast<std::size_t>(n), 0.0);
  for (const GateEntry& e : gates) mass[static_cast<std::size_t>(e.token)] += e.value;
  return mass;
}

Mat routing_values(const MoELayer& layer, const Sample& sample) {
  if (sample.dim() != layer.d)
    throw ConfigError("token dimension " + std::to_string(sample.dim()) +
                      " does not match layer d = " + std::to_string(layer.d));
  Mat g(layer.k, sample.n());
  for (int s = 0; s < layer.k; ++s)
    for (int j = 0; j < sample.n(); ++j) g(s, j) = sample.token_dot(layer.routers[s], j);
  return g;
}

std::vector<int> top_indices(std::span<const double> values, int l) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + l, idx.end(), better);
  idx.resize(static_cast<std::size_t>(l));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

void check_mask(const Mat& routing, const PruneMask& mask) {
  mask.validate();
  if (mask.k != routing.rows) throw ContractError("prune mask size does not match expert count");
}

}  // namespace

GatingOutput gate_token_choice(const Mat& routing, const RoutingConfig& cfg, const PruneMask& mask) {
  if (cfg.mode != RoutingMode::TokenChoice) throw ContractError("routing config is not token-choice");
  const int k = routing.rows, n = routing.cols;
  if (cfg.l < 1 || cfg.l > k)
    throw ConfigError("token-choice requires 1 <= l <= k, got l = " + std::to_string(cfg.l));
  check_mask(routing, mask);

  GatingOutput out;
  out.mode = RoutingMode::TokenChoice;
  out.k = k;
  out.n = n;
  out.l = cfg.l;
  out.routing = routing;
  out.selected.resize(static_cast<std::size_t>(n));
  out.gates.reserve(static_cast<std::size_t>(n) * cfg.l);

  std::vector<double> column(static_cast<std::size_t>(k));
  for (int j = 0; j < n; ++j) {
    for (int s = 0; s < k; ++s) column[static_cast<std::size_t>(s)] = routing(s, j);
    std::vector<int> sel = top_indices(column, cfg.l);

    double maxv = column[static_cast<std::size_t>(sel[0])];
    for (int s : sel) maxv = std::max(maxv, column[static_cast<std::size_t>(s)]);
    double denom = 0.0;
    for (int s : sel) denom += std::exp(column[static_cast<std::size_t>(s)] - maxv);
    for (int s : sel) {
      if (!mask.retains(s)) continue;
      out.gates.push_back({s, j, std::exp(column[static_cast<std::size_t>(s)] - maxv) / denom});
    }
    out.selected[static_cast<std::size_t>(j)] = std::move(sel);
  }
  return out;
}

GatingOutput gate_expert_choice(const Mat& routing, const RoutingConfig& cfg, const PruneMask& mask) {
  if (cfg.mode != RoutingMode::ExpertChoice) throw ContractError("routing config is not expert-choice");
  const int k = routing.rows, n = routing.cols;
  if (cfg.l < 1 || cfg.l > n)
    throw ConfigError("expert-choice requires 1 <= l <= n, got l = " + std::to_string(cfg.l));
  check_mask(routing, mask);

  GatingOutput out;
  out.mode = RoutingMode::ExpertChoice;
  out.k = k;
  out.n = n;
  out.l = cfg.l;
  out.routing = routing;
  out.selected.resize(static_cast<std::size_t>(k));
  out.gates.reserve(static_cast<std::size_t>(mask.retained_count()) * cfg.l);

  for (int s = 0; s < k; ++s) {
    if (!mask.retains(s)) continue;  // pruned expert: router gone, selects nothing
    std::vector<int> sel = top_indices(routing.row(s), cfg.l);
    double maxv = routing(s, sel[0]);
    for (int j : sel) maxv = std::max(maxv, routing(s, j));
    double denom = 0.0;
    for (int j : sel) denom += std::exp(routing(s, j) - maxv);
    for (int j : sel) out.gates.push_back({s, j, std::exp(routing(s, j) - maxv) / denom});
    out.selected[static_cast<std::size_t>(s)] = std::move(sel);
  }
  return out;
}

GatingOutput compute_gating(const MoELayer& layer, const Sample& sample, const RoutingConfig& cfg,
                            const PruneMask& mask) {
  const Mat g = routing_values(layer, sample);
  return cfg.mode == RoutingMode::TokenChoice ? gate_token_choice(g, cfg, mask)
                                              : gate_expert_choice(g, cfg, mask);
}

}  // namespace moe
