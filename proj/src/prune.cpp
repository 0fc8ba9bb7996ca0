#include "moe/prune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "moe/error.hpp"
#include "moe/gating.hpp"

namespace moe {

std::string to_string(PruneCriterion c) {
  switch (c) {
    case PruneCriterion::Delta: return "delta";
    case PruneCriterion::Importance: return "importance";
    case PruneCriterion::RouterMagnitude: return "router_magnitude";
    case PruneCriterion::NeuronMagnitude: return "neuron_magnitude";
    case PruneCriterion::NeuronChange: return "neuron_change";
    case PruneCriterion::Random: return "random";
  }
  throw ConfigError("unknown criterion");
}

PruneCriterion parse_criterion(const std::string& name) {
  if (name == "delta") return PruneCriterion::Delta;
  if (name == "importance") return PruneCriterion::Importance;
  if (name == "router_magnitude") return PruneCriterion::RouterMagnitude;
  if (name == "neuron_magnitude") return PruneCriterion::NeuronMagnitude;
  if (name == "neuron_change") return PruneCriterion::NeuronChange;
  if (name == "random") return PruneCriterion::Random;
  throw ConfigError("unknown pruning criterion: " + name);
}

std::vector<double> router_norm_change(const MoELayer& layer0, const MoELayer& layerT) {
  if (!layer0.same_shape(layerT)) throw ContractError("router_norm_change: layer shapes differ");
  std::vector<double> deltas(static_cast<std::size_t>(layer0.k));
  for (int s = 0; s < layer0.k; ++s)
    deltas[static_cast<std::size_t>(s)] = l2_norm(layerT.routers[static_cast<std::size_t>(s)]) -
                                          l2_norm(layer0.routers[static_cast<std::size_t>(s)]);
  return deltas;
}

namespace {

// group id -> member expert indices, ascending.
std::map<int, std::vector<int>> build_groups(int k, Grouping grouping,
                                             const std::vector<int>& group_of) {
  std::map<int, std::vector<int>> groups;
  if (grouping == Grouping::WholeLayer) {
    std::vector<int> all(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) all[static_cast<std::size_t>(s)] = s;
    groups[0] = std::move(all);
    return groups;
  }
  if (static_cast<int>(group_of.size()) != k)
    throw ConfigError("group assignment size does not match expert count");
  for (int s = 0; s < k; ++s) groups[group_of[static_cast<std::size_t>(s)]].push_back(s);
  return groups;
}

int retained_size(double rho, int group_size) {
  // floor((1-rho) * size), clamped to at least one expert per group
  return std::max(1, static_cast<int>(std::floor((1.0 - rho) * group_size)));
}

}  // namespace

PruneDecision select_retained(const std::vector<double>& scores, double rho, Grouping grouping,
                              const std::vector<int>& group_of) {
  if (!(rho >= 0.0 && rho < 1.0))
    throw ConfigError("infeasible pruning ratio: rho must lie in [0, 1)");
  const int k = static_cast<int>(scores.size());
  if (k < 1) throw ConfigError("select_retained needs at least one expert");

  std::vector<int> retained;
  for (auto& [id, members] : build_groups(k, grouping, group_of)) {
    std::vector<int> order = members;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
      return a < b;
    });
    const int keep = retained_size(rho, static_cast<int>(members.size()));
    retained.insert(retained.end(), order.begin(), order.begin() + keep);
  }

  PruneDecision decision;
  decision.scores = scores;
  decision.rho = rho;
  decision.grouping = grouping;
  decision.retained = PruneMask::from_retained(k, retained);
  return decision;
}

BaselineScores baseline_scores(const MoELayer& layer0, const MoELayer& layerT, const Dataset& data,
                               const RoutingConfig& route) {
  if (!layer0.same_shape(layerT)) throw ContractError("baseline_scores: layer shapes differ");
  if (data.samples.empty()) throw ContractError("baseline_scores: empty dataset");
  const int k = layerT.k;

  BaselineScores b;
  b.router_magnitude.resize(static_cast<std::size_t>(k));
  b.avg_neuron_magnitude.resize(static_cast<std::size_t>(k));
  b.avg_change_neuron_magnitude.resize(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) {
    b.router_magnitude[static_cast<std::size_t>(s)] =
        l2_norm(layerT.routers[static_cast<std::size_t>(s)]);
    double mag = 0.0, change = 0.0;
    for (int r = 0; r < layerT.m; ++r) {
      const double nT = l2_norm(layerT.neuron(s, r));
      mag += nT;
      change += nT - l2_norm(layer0.neuron(s, r));
    }
    b.avg_neuron_magnitude[static_cast<std::size_t>(s)] = mag / layerT.m;
    b.avg_change_neuron_magnitude[static_cast<std::size_t>(s)] = change / layerT.m;
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  b.top1_fraction.assign(static_cast<std::size_t>(k), nan);
  b.confidence.assign(static_cast<std::size_t>(k), nan);
  b.importance_score.assign(static_cast<std::size_t>(k), nan);
  if (route.mode != RoutingMode::TokenChoice) return b;  // importance undefined otherwise

  b.importance_defined = true;
  std::vector<long> top1_count(static_cast<std::size_t>(k), 0);
  std::vector<double> conf_sum(static_cast<std::size_t>(k), 0.0);
  long total_tokens = 0;
  const PruneMask full = PruneMask::full(k);
  for (const Sample& sample : data.samples) {
    const Mat g = routing_values(layerT, sample);
    const GatingOutput gating = gate_token_choice(g, route, full);
    for (int j = 0; j < sample.n(); ++j) {
      int best = 0;
      for (int s = 1; s < k; ++s)
        if (g(s, j) > g(best, j)) best = s;  // ties keep the lower index
      ++top1_count[static_cast<std::size_t>(best)];
      conf_sum[static_cast<std::size_t>(best)] += gating.gate(best, j);
      ++total_tokens;
    }
  }
  for (int s = 0; s < k; ++s) {
    const long c = top1_count[static_cast<std::size_t>(s)];
    b.top1_fraction[static_cast<std::size_t>(s)] = static_cast<double>(c) / total_tokens;
    b.confidence[static_cast<std::size_t>(s)] = c > 0 ? conf_sum[static_cast<std::size_t>(s)] / c : 0.0;
    b.importance_score[static_cast<std::size_t>(s)] =
        b.top1_fraction[static_cast<std::size_t>(s)] * b.confidence[static_cast<std::size_t>(s)];
  }
  return b;
}

PruneMask random_mask(int k, double rho, const std::vector<int>& group_of, Grouping grouping,
                      Philox& rng) {
  if (!(rho >= 0.0 && rho < 1.0))
    throw ConfigError("infeasible pruning ratio: rho must lie in [0, 1)");
  std::vector<int> retained;
  for (auto& [id, members] : build_groups(k, grouping, group_of)) {
    std::vector<int> pool = members;
    const int keep = retained_size(rho, static_cast<int>(pool.size()));
    // partial Fisher-Yates
    for (int i = 0; i < keep; ++i) {
      const int pick = i + rng.next_index(static_cast<int>(pool.size()) - i);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick)]);
      retained.push_back(pool[static_cast<std::size_t>(i)]);
    }
  }
  return PruneMask::from_retained(k, retained);
}

void write_score_csv(const std::filesystem::path& path, const std::vector<double>& deltas,
                     const std::vector<int>& group_of, const BaselineScores& baselines,
                     const PruneDecision& decision) {
  auto out = open_output(path);
  out << "expert_id,group,delta,importance_score,top1_fraction,confidence,router_magnitude,"
         "avg_neuron_magnitude,avg_change_neuron_magnitude,retained\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  for (std::size_t s = 0; s < deltas.size(); ++s) {
    out << (s + 1) << ',' << (group_of.empty() ? 0 : group_of[s]) << ',' << fmt_double(deltas[s])
        << ',' << cell(baselines.importance_score[s]) << ',' << cell(baselines.top1_fraction[s])
        << ',' << cell(baselines.confidence[s]) << ',' << fmt_double(baselines.router_magnitude[s])
        << ',' << fmt_double(baselines.avg_neuron_magnitude[s]) << ','
        << fmt_double(baselines.avg_change_neuron_magnitude[s]) << ','
        << (decision.retained.retains(static_cast<int>(s)) ? 1 : 0) << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace moe
