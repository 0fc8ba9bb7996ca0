#include "moe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moe/error.hpp"
#include "moe/forward.hpp"

namespace moe {

namespace {

double binom_stderr(double p, long n) {
  if (n <= 0) return 0.0;
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// Whether, in this gating, expert s routes the sample's task token with
// gating value >= 1/l.
bool selects_task(const GatingOutput& gating, int s, int task_pos) {
  const double threshold = 1.0 / gating.l;
  for (const GateEntry& e : gating.gates) {
    if (e.expert == s && e.token == task_pos) return e.value >= threshold;
    }
  return false;
}

}  // namespace

ProficiencyReport proficiency_on_samples(const MoELayer& layer, std::span<const Sample> samples,
                                         const RoutingConfig& route) {
  const int k = layer.k;
  const PruneMask full = PruneMask::full(k);
  std::vector<double> hit1(static_cast<std::size_t>(k), 0.0), hit2(hit1);
  long n1 = 0, n2 = 0;
  for (const Sample& sample : samples) {
    const GatingOutput gating = compute_gating(layer, sample, route, full);
    const double threshold = 1.0 / gating.l;
    std::vector<char> hit(static_cast<std::size_t>(k), 0);
    for (const GateEntry& e : gating.gates)
      if (e.token == static_cast<int>(sample.task_pos) && e.value >= threshold)
        hit[static_cast<std::size_t>(e.expert)] = 1;
    if (sample.label > 0) {
      ++n1;
      for (int s = 0; s < k; ++s) hit1[static_cast<std::size_t>(s)] += hit[static_cast<std::size_t>(s)];
    } else {
      ++n2;
      for (int s = 0; s < k; ++s) hit2[static_cast<std::size_t>(s)] += hit[static_cast<std::size_t>(s)];
    }
  }

  ProficiencyReport rep;
  rep.samples_per_class = std::max(n1, n2);
  rep.p1.resize(static_cast<std::size_t>(k));
  rep.p2.resize(static_cast<std::size_t>(k));
  rep.p1_stderr.resize(static_cast<std::size_t>(k));
  rep.p2_stderr.resize(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) {
    rep.p1[static_cast<std::size_t>(s)] = n1 > 0 ? hit1[static_cast<std::size_t>(s)] / n1 : 0.0;
    rep.p2[static_cast<std::size_t>(s)] = n2 > 0 ? hit2[static_cast<std::size_t>(s)] / n2 : 0.0;
    rep.p1_stderr[static_cast<std::size_t>(s)] = binom_stderr(rep.p1[static_cast<std::size_t>(s)], n1);
    rep.p2_stderr[static_cast<std::size_t>(s)] = binom_stderr(rep.p2[static_cast<std::size_t>(s)], n2);
  }
  return rep;
}

ProficiencyReport estimate_proficiency(const MoELayer& layer, const PatternSetPtr& ps, int n,
                                       const RoutingConfig& route, int num_samples, Philox& rng) {
  if (num_samples < 1) throw ConfigError("estimate_proficiency needs num_samples >= 1");
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(num_samples) * 2);
  for (int i = 0; i < num_samples; ++i) samples.push_back(sample_input(ps, n, +1, rng));
  for (int i = 0; i < num_samples; ++i) samples.push_back(sample_input(ps, n, -1, rng));
  return proficiency_on_samples(layer, samples, route);
}

ProficiencyReport exact_proficiency(const MoELayer& layer, const PatternSetPtr& ps, int n,
                                    const RoutingConfig& route, long max_terms) {
  const int d = ps->dim();
  const int choices = d - 2;
  double terms = static_cast<double>(n);
  for (int j = 1; j < n; ++j) terms *= choices;
  if (terms > static_cast<double>(max_terms))
    throw ConfigError("exact proficiency enumeration too large: " + fmt_double(terms) + " terms");

  const int k = layer.k;
  ProficiencyReport rep;
  rep.samples_per_class = 0;
  rep.p1.assign(static_cast<std::size_t>(k), 0.0);
  rep.p2.assign(static_cast<std::size_t>(k), 0.0);
  rep.p1_stderr.assign(static_cast<std::size_t>(k), 0.0);
  rep.p2_stderr.assign(static_cast<std::size_t>(k), 0.0);
  const std::vector<double>& probs = ps->irrelevant_probs();
  const PruneMask full = PruneMask::full(k);

  for (int label : {+1, -1}) {
    std::vector<double>& p = label > 0 ? rep.p1 : rep.p2;
    for (int pos = 0; pos < n; ++pos) {
      // odometer over irrelevant assignments of the n-1 remaining positions
      std::vector<int> fill(static_cast<std::size_t>(n > 1 ? n - 1 : 0), 0);
      for (;;) {
        Sample sample;
        sample.patterns = ps;
        sample.label = static_cast<std::int8_t>(label);
        sample.task_pos = static_cast<std::uint32_t>(pos);
        sample.tokens.resize(static_cast<std::size_t>(n));
        double prob = 1.0 / n;
        int fi = 0;
        for (int j = 0; j < n; ++j) {
          if (j == pos) {
            sample.tokens[static_cast<std::size_t>(j)] =
                static_cast<std::uint32_t>(ps->task_index(label));
          } else {
            const int slot = fill[static_cast<std::size_t>(fi++)];
            sample.tokens[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(2 + slot);
            prob *= probs[static_cast<std::size_t>(slot)];
          }
        }
        if (prob > 0.0) {
          const GatingOutput gating = compute_gating(layer, sample, route, full);
          for (int s = 0; s < k; ++s)
            if (selects_task(gating, s, pos)) p[static_cast<std::size_t>(s)] += prob;
        }
        // advance odometer; empty fill (n == 1) terminates immediately
        int carry = static_cast<int>(fill.size()) - 1;
        while (carry >= 0) {
          if (++fill[static_cast<std::size_t>(carry)] < choices) break;
          fill[static_cast<std::size_t>(carry)] = 0;
          --carry;
        }
        if (carry < 0) break;
      }
    }
  }
  return rep;
}

ProjectionReport projections(const MoELayer& layer, const PatternSet& ps) {
  if (layer.d != ps.dim()) throw ContractError("projections: pattern dimension mismatch");
  ProjectionReport rep;
  rep.router_components = Mat(layer.k, layer.d);
  rep.neuron_task1 = Mat(layer.k, layer.m);
  rep.neuron_task2 = Mat(layer.k, layer.m);
  rep.neuron_irrelevant_max = Mat(layer.k, layer.m);
  for (int s = 0; s < layer.k; ++s) {
    for (int i = 0; i < layer.d; ++i)
      rep.router_components(s, i) = ps.dot(layer.routers[static_cast<std::size_t>(s)], i);
    for (int r = 0; r < layer.m; ++r) {
      rep.neuron_task1(s, r) = ps.dot(layer.neuron(s, r), ps.task1_index());
      rep.neuron_task2(s, r) = ps.dot(layer.neuron(s, r), ps.task2_index());
      double best = -std::numeric_limits<double>::infinity();
      for (int i = 2; i < layer.d; ++i) best = std::max(best, ps.dot(layer.neuron(s, r), i));
      rep.neuron_irrelevant_max(s, r) = best;
    }
  }
  return rep;
}

AssumptionReport check_assumptions(const MoELayer& layer0, const PatternSet& ps,
                                   const ProficiencyReport& proficiency0,
                                   double important_threshold, double unimportant_threshold) {
  if (!layer0.analyzed) throw ContractError("check_assumptions requires an analyzed layer");
  if (!(important_threshold > unimportant_threshold) || important_threshold >= 1.0 ||
      unimportant_threshold <= 0.0)
    throw ConfigError("thresholds must satisfy 0 < unimportant < important < 1");

  AssumptionReport rep;
  rep.important_threshold = important_threshold;
  rep.unimportant_threshold = unimportant_threshold;

  const int k = layer0.k;
  for (int s = 0; s < k; ++s) {
    rep.c1 = std::max(rep.c1, l2_norm(layer0.routers[static_cast<std::size_t>(s)]));
    for (int r = 0; r < layer0.m; ++r) rep.c2 = std::max(rep.c2, l2_norm(layer0.neuron(s, r)));
  }

  const std::vector<int> groups = layer0.sign_groups();
  rep.expert_class.resize(static_cast<std::size_t>(k));
  rep.separation_margin.assign(static_cast<std::size_t>(k),
                               std::numeric_limits<double>::quiet_NaN());
  rep.activated_fraction.resize(static_cast<std::size_t>(k));

  int group_size[2] = {0, 0};
  int unimportant[2] = {0, 0};
  for (int s = 0; s < k; ++s) {
    const int g = groups[static_cast<std::size_t>(s)];
    const double p = g == 0 ? proficiency0.p1[static_cast<std::size_t>(s)]
                            : proficiency0.p2[static_cast<std::size_t>(s)];
    ++group_size[g];
    ExpertClass cls = ExpertClass::Ambiguous;
    if (p >= important_threshold)
      cls = ExpertClass::Important;
    else if (p <= unimportant_threshold) {
      cls = ExpertClass::Unimportant;
      ++unimportant[g];
    }
    rep.expert_class[static_cast<std::size_t>(s)] = cls;

    const int task = g == 0 ? ps.task1_index() : ps.task2_index();
    const double task_comp = ps.dot(layer0.routers[static_cast<std::size_t>(s)], task);
    if (cls == ExpertClass::Important) {
      double margin = std::numeric_limits<double>::infinity();
      for (int i = 2; i < layer0.d; ++i)
        margin = std::min(margin,
                          std::abs(task_comp - ps.dot(layer0.routers[static_cast<std::size_t>(s)], i)));
      rep.separation_margin[static_cast<std::size_t>(s)] = margin;
    }

    int active = 0;
    for (int r = 0; r < layer0.m; ++r)
      if (ps.dot(layer0.neuron(s, r), task) >= 0.0) ++active;
    rep.activated_fraction[static_cast<std::size_t>(s)] =
        static_cast<double>(active) / layer0.m;
  }

  double gamma = 1.0;
  for (int g = 0; g < 2; ++g)
    if (group_size[g] > 0)
      gamma = std::min(gamma, static_cast<double>(unimportant[g]) / group_size[g]);
  rep.gamma = gamma;
  return rep;
}

double test_accuracy(const MoELayer& layer, const PruneMask& mask, const Dataset& data,
                     const RoutingConfig& route) {
  if (data.samples.empty()) throw ContractError("test_accuracy: empty dataset");
  long correct = 0;
  for (const Sample& s : data.samples) {
    const double f = classify(layer, s, route, mask);
    if (s.label * f > 0.0) ++correct;  // f == 0 counts as an error
  }
  return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

FlopsReport flops_per_sample(int k, int m, int d, int d_out, int n, const RoutingConfig& route,
                             const PruneMask& mask, const GatingOutput* gating) {
  if (k < 1 || m < 1 || d < 1 || d_out < 1 || n < 1)
    throw ConfigError("flops_per_sample: dimensions must be positive");
  mask.validate();
  const long long retained = mask.retained_count();

  FlopsReport rep;
  const long long per_token = 2LL * d * m + 2LL * m * d_out;
  long long routed_pairs = 0;
  if (route.mode == RoutingMode::TokenChoice) {
    rep.routing_flops = 2LL * n * d * k;  // pruned routers stay in the denominator
    if (gating != nullptr)
      routed_pairs = static_cast<long long>(gating->gates.size());
    else
      routed_pairs = static_cast<long long>(n) * std::min<long long>(route.l, retained);
    rep.parameter_count = static_cast<long long>(k) * d + retained * (static_cast<long long>(d) * m + static_cast<long long>(m) * d_out);
  } else {
    rep.routing_flops = 2LL * n * d * retained;  // pruned routers removed
    routed_pairs = static_cast<long long>(route.l) * retained;
    rep.parameter_count =
        retained * (d + static_cast<long long>(d) * m + static_cast<long long>(m) * d_out);
  }
  rep.expert_flops = routed_pairs * per_token;
  rep.total_flops = rep.routing_flops + rep.expert_flops;
  return rep;
}

void ProficiencyReport::save_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  out << "expert_id,p1,p1_stderr,p2,p2_stderr,samples_per_class\n";
  for (std::size_t s = 0; s < p1.size(); ++s)
    out << (s + 1) << ',' << fmt_double(p1[s]) << ',' << fmt_double(p1_stderr[s]) << ','
        << fmt_double(p2[s]) << ',' << fmt_double(p2_stderr[s]) << ',' << samples_per_class << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

void ProjectionReport::save_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  out << "expert_id,neuron_id,task1_component,task2_component,irrelevant_max\n";
  for (int s = 0; s < neuron_task1.rows; ++s)
    for (int r = 0; r < neuron_task1.cols; ++r)
      out << (s + 1) << ',' << (r + 1) << ',' << fmt_double(neuron_task1(s, r)) << ','
          << fmt_double(neuron_task2(s, r)) << ',' << fmt_double(neuron_irrelevant_max(s, r))
          << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

void ProjectionReport::save_matrix(const std::filesystem::path& path) const {
  auto out = open_output(path);
  for (int s = 0; s < router_components.rows; ++s) {
    for (int i = 0; i < router_components.cols; ++i) {
      if (i) out << ' ';
      out << fmt_double(router_components(s, i));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void AssumptionReport::save_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  out << "expert_id,class,separation_margin,activated_fraction\n";
  auto cls = [](ExpertClass c) {
    switch (c) {
      case ExpertClass::Important: return "important";
      case ExpertClass::Unimportant: return "unimportant";
      case ExpertClass::Ambiguous: return "ambiguous";
    }
    return "?";
  };
  for (std::size_t s = 0; s < expert_class.size(); ++s)
    out << (s + 1) << ',' << cls(expert_class[s]) << ','
        << (std::isnan(separation_margin[s]) ? std::string() : fmt_double(separation_margin[s]))
        << ',' << fmt_double(activated_fraction[s]) << "\n";
  out << "# c1," << fmt_double(c1) << "\n";
  out << "# c2," << fmt_double(c2) << "\n";
  out << "# gamma," << fmt_double(gamma) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace moe
