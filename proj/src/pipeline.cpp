#include "moe/pipeline.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "moe/error.hpp"

namespace moe {

using nlohmann::json;

namespace {

std::string routing_name(RoutingMode m) {
  return m == RoutingMode::TokenChoice ? "token_choice" : "expert_choice";
}
RoutingMode parse_routing(const std::string& s) {
  if (s == "token_choice") return RoutingMode::TokenChoice;
  if (s == "expert_choice") return RoutingMode::ExpertChoice;
  throw ConfigError("unknown routing mode: " + s);
}
std::string pattern_name(PatternMode m) {
  return m == PatternMode::StandardBasis ? "standard_basis" : "random_orthonormal";
}
PatternMode parse_pattern(const std::string& s) {
  if (s == "standard_basis") return PatternMode::StandardBasis;
  if (s == "random_orthonormal") return PatternMode::RandomOrthonormal;
  throw ConfigError("unknown pattern mode: " + s);
}
std::string grouping_name(Grouping g) {
  return g == Grouping::BySignGroup ? "by_sign_group" : "whole_layer";
}
Grouping parse_grouping(const std::string& s) {
  if (s == "by_sign_group") return Grouping::BySignGroup;
  if (s == "whole_layer") return Grouping::WholeLayer;
  throw ConfigError("unknown grouping: " + s);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (d < 4) throw ConfigError("d must be >= 4");
  if (n < 1 || n > d) throw ConfigError("n must satisfy 1 <= n <= d");
  if (k < 2) throw ConfigError("k must be >= 2");
  if (m < 1) throw ConfigError("m must be >= 1");
  if (positive_experts < 1 || positive_experts >= k)
    throw ConfigError("positive_experts must lie in [1, k-1]");
  if (routing == RoutingMode::TokenChoice && (l < 1 || l > k))
    throw ConfigError("token-choice requires 1 <= l <= k");
  if (routing == RoutingMode::ExpertChoice && (l < 1 || l > n))
    throw ConfigError("expert-choice requires 1 <= l <= n");
  if (rho_list.empty()) throw ConfigError("rho_list must not be empty");
  for (double rho : rho_list)
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho values must lie in [0, 1)");
  if (eval_samples < 1 || proficiency_samples < 1)
    throw ConfigError("evaluation sample counts must be positive");
  if (!(important_threshold > unimportant_threshold) || unimportant_threshold <= 0.0 ||
      important_threshold >= 1.0)
    throw ConfigError("thresholds must satisfy 0 < unimportant < important < 1");
  if (!online && train_samples < 1) throw ConfigError("epoch mode needs train_samples >= 1");
  if (init == InitMode::Planted) {
    if (plant.experts_per_group < 1 ||
        plant.experts_per_group > std::min(positive_experts, k - positive_experts))
      throw ConfigError("plant.experts_per_group exceeds a sign group");
    if (plant.neuron_fraction <= 0.0 || plant.neuron_fraction > 1.0)
      throw ConfigError("plant.neuron_fraction must lie in (0, 1]");
  }
  train.validate();
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["data"] = {{"d", d},
               {"n", n},
               {"pattern_mode", pattern_name(pattern_mode)},
               {"irrelevant_probs", irrelevant_probs}};
  j["model"] = {{"k", k},
                {"m", m},
                {"routing", routing_name(routing)},
                {"l", l},
                {"positive_experts", positive_experts},
                {"init", init == InitMode::Random ? "random" : "planted"},
                {"plant",
                 {{"experts_per_group", plant.experts_per_group},
                  {"router_strength", plant.router_strength},
                  {"neuron_strength", plant.neuron_strength},
                  {"neuron_fraction", plant.neuron_fraction}}}};
  j["train"] = {{"eta_e", train.eta_e},
                {"eta_r", train.eta_r},
                {"batch_size", train.batch_size},
                {"steps", train.steps},
                {"post_prune_steps", train.post_prune_steps},
                {"init_router_std", train.init_router_std},
                {"init_neuron_std", train.init_neuron_std},
                {"log_every", train.log_every},
                {"online", online},
                {"online_balanced", online_balanced},
                {"train_samples", train_samples}};
  j["prune"] = {{"rho", rho_list},
                {"grouping", grouping_name(grouping)},
                {"criterion", to_string(criterion)}};
  j["eval"] = {{"eval_samples", eval_samples},
               {"proficiency_samples", proficiency_samples},
               {"important_threshold", important_threshold},
               {"unimportant_threshold", unimportant_threshold}};
  j["seed"] = seed;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cannot parse config JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("data")) {
      const json& jd = j.at("data");
      cfg.d = jd.value("d", cfg.d);
      cfg.n = jd.value("n", cfg.n);
      if (jd.contains("pattern_mode")) cfg.pattern_mode = parse_pattern(jd.at("pattern_mode"));
      cfg.irrelevant_probs = jd.value("irrelevant_probs", cfg.irrelevant_probs);
    }
    if (j.contains("model")) {
      const json& jm = j.at("model");
      cfg.k = jm.value("k", cfg.k);
      cfg.m = jm.value("m", cfg.m);
      if (jm.contains("routing")) cfg.routing = parse_routing(jm.at("routing"));
      cfg.l = jm.value("l", cfg.l);
      cfg.positive_experts = jm.value("positive_experts", cfg.positive_experts);
      if (jm.contains("init")) {
        const std::string s = jm.at("init");
        if (s == "random")
          cfg.init = InitMode::Random;
        else if (s == "planted")
          cfg.init = InitMode::Planted;
        else
          throw ConfigError("unknown init mode: " + s);
      }
      if (jm.contains("plant")) {
        const json& jp = jm.at("plant");
        cfg.plant.experts_per_group = jp.value("experts_per_group", cfg.plant.experts_per_group);
        cfg.plant.router_strength = jp.value("router_strength", cfg.plant.router_strength);
        cfg.plant.neuron_strength = jp.value("neuron_strength", cfg.plant.neuron_strength);
        cfg.plant.neuron_fraction = jp.value("neuron_fraction", cfg.plant.neuron_fraction);
      }
    }
    if (j.contains("train")) {
      const json& jt = j.at("train");
      cfg.train.eta_e = jt.value("eta_e", cfg.train.eta_e);
      cfg.train.eta_r = jt.value("eta_r", cfg.train.eta_r);
      cfg.train.batch_size = jt.value("batch_size", cfg.train.batch_size);
      cfg.train.steps = jt.value("steps", cfg.train.steps);
      cfg.train.post_prune_steps = jt.value("post_prune_steps", cfg.train.post_prune_steps);
      cfg.train.init_router_std = jt.value("init_router_std", cfg.train.init_router_std);
      cfg.train.init_neuron_std = jt.value("init_neuron_std", cfg.train.init_neuron_std);
      cfg.train.log_every = jt.value("log_every", cfg.train.log_every);
      cfg.online = jt.value("online", cfg.online);
      cfg.online_balanced = jt.value("online_balanced", cfg.online_balanced);
      cfg.train_samples = jt.value("train_samples", cfg.train_samples);
    }
    if (j.contains("prune")) {
      const json& jp = j.at("prune");
      if (jp.contains("rho")) {
        if (jp.at("rho").is_array())
          cfg.rho_list = jp.at("rho").get<std::vector<double>>();
        else
          cfg.rho_list = {jp.at("rho").get<double>()};
      }
      if (jp.contains("grouping")) cfg.grouping = parse_grouping(jp.at("grouping"));
      if (jp.contains("criterion")) cfg.criterion = parse_criterion(jp.at("criterion"));
    }
    if (j.contains("eval")) {
      const json& je = j.at("eval");
      cfg.eval_samples = je.value("eval_samples", cfg.eval_samples);
      cfg.proficiency_samples = je.value("proficiency_samples", cfg.proficiency_samples);
      cfg.important_threshold = je.value("important_threshold", cfg.important_threshold);
      cfg.unimportant_threshold = je.value("unimportant_threshold", cfg.unimportant_threshold);
    }
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

MoELayer build_initial_layer(const ExperimentConfig& cfg) {
  MoELayer layer = make_analyzed_layer(cfg.k, cfg.m, cfg.d, cfg.positive_experts);
  Philox rng(cfg.seed, streams::kInit);
  init_gaussian(layer, cfg.train.init_router_std, cfg.train.init_neuron_std, rng);

  if (cfg.init == InitMode::Planted) {
    const PatternSet ps = build_pattern_set(cfg.d, cfg.pattern_mode, cfg.seed,
                                            cfg.irrelevant_probs);
    const int planted_neurons =
        std::max(1, static_cast<int>(std::ceil(cfg.plant.neuron_fraction * cfg.m)));
    auto plant_expert = [&](int s, int task) {
      ps.add_scaled(layer.routers[static_cast<std::size_t>(s)], task, cfg.plant.router_strength);
      for (int r = 0; r < planted_neurons; ++r)
        ps.add_scaled(layer.neuron(s, r), task, cfg.plant.neuron_strength);
    };
    for (int i = 0; i < cfg.plant.experts_per_group; ++i) {
      plant_expert(i, ps.task1_index());                        // leading experts of S1
      plant_expert(cfg.positive_experts + i, ps.task2_index()); // leading experts of S2
    }
  }
  return layer;
}

namespace {

std::unique_ptr<SampleSource> make_source(const ExperimentConfig& cfg, const PatternSetPtr& ps,
                                          std::uint64_t stream, Dataset& storage) {
  if (cfg.online)
    return std::make_unique<OnlineSampler>(ps, cfg.n, Philox(cfg.seed, stream),
                                           cfg.online_balanced);
  Philox rng(cfg.seed, stream);
  storage = sample_dataset(ps, cfg.n, cfg.train_samples, true, rng);
  return std::make_unique<DatasetCycler>(storage);
}

PruneDecision decide(const ExperimentConfig& cfg, double rho, const std::vector<double>& deltas,
                     const BaselineScores& baselines, const std::vector<int>& groups) {
  switch (cfg.criterion) {
    case PruneCriterion::Delta:
      return select_retained(deltas, rho, cfg.grouping, groups);
    case PruneCriterion::Importance: {
      if (!baselines.importance_defined)
        throw ConfigError("importance criterion requires token-choice routing");
      return select_retained(baselines.importance_score, rho, cfg.grouping, groups);
    }
    case PruneCriterion::RouterMagnitude:
      return select_retained(baselines.router_magnitude, rho, cfg.grouping, groups);
    case PruneCriterion::NeuronMagnitude:
      return select_retained(baselines.avg_neuron_magnitude, rho, cfg.grouping, groups);
    case PruneCriterion::NeuronChange:
      return select_retained(baselines.avg_change_neuron_magnitude, rho, cfg.grouping, groups);
    case PruneCriterion::Random: {
      Philox rng(cfg.seed, streams::kRandomMask);
      PruneDecision d;
      d.scores = deltas;
      d.rho = rho;
      d.grouping = cfg.grouping;
      d.retained = random_mask(static_cast<int>(deltas.size()), rho, groups, cfg.grouping, rng);
      return d;
    }
  }
  throw ConfigError("unknown criterion");
}

// Token-choice with whole-layer grouping must keep at least l experts, else
// every token loses part of its selected set by construction.
void check_feasible(const ExperimentConfig& cfg, const PruneMask& mask) {
  if (cfg.routing == RoutingMode::TokenChoice && cfg.grouping == Grouping::WholeLayer &&
      mask.retained_count() < cfg.l)
    throw ConfigError("infeasible pruning ratio: token-choice whole-layer pruning must retain >= l = " +
                      std::to_string(cfg.l) + " experts");
}

void write_failure_marker(const std::filesystem::path& out_dir, const std::string& message) {
  if (out_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream out(out_dir / "FAILED");
  out << message << "\n";
}

void write_results_csv(const std::filesystem::path& path, const PipelineResult& res) {
  auto out = open_output(path);
  out << "stage,accuracy,routing_flops,expert_flops,total_flops,parameter_count,retained\n";
  auto row = [&](const std::string& stage, const EvalResult& e, int retained) {
    out << stage << ',' << fmt_double(e.accuracy) << ',' << e.flops.routing_flops << ','
        << e.flops.expert_flops << ',' << e.flops.total_flops << ',' << e.flops.parameter_count
        << ',' << retained << "\n";
  };
  row("unpruned", res.unpruned, res.decision.retained.k);
  row("pruned", res.pruned, res.decision.retained.retained_count());
  if (res.finetuned) row("finetuned", *res.finetuned, res.decision.retained.retained_count());
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

PipelineResult run_full_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  try {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    const auto ps = std::make_shared<const PatternSet>(
        build_pattern_set(cfg.d, cfg.pattern_mode, cfg.seed, cfg.irrelevant_probs));
    const RoutingConfig route{cfg.routing, cfg.l};

    PipelineResult res;

    // Step 1: initialize
    res.layer0 = build_initial_layer(cfg);
    res.layer0.validate();
    if (!out_dir.empty()) {
      auto manifest = open_output(out_dir / "run_manifest.json");
      manifest << cfg.to_json_string() << "\n";
      res.layer0.save(out_dir / "layer_initial.moel");
    }

    // Pre-training proficiency and assumption measurements
    {
      Philox rng(cfg.seed, streams::kProficiency);
      res.proficiency0 =
          estimate_proficiency(res.layer0, ps, cfg.n, route, cfg.proficiency_samples, rng);
    }
    res.assumptions = check_assumptions(res.layer0, *ps, res.proficiency0,
                                        cfg.important_threshold, cfg.unimportant_threshold);
    res.gamma = res.assumptions.gamma;
    if (!out_dir.empty()) {
      res.proficiency0.save_csv(out_dir / "proficiency_initial.csv");
      res.assumptions.save_csv(out_dir / "assumptions.csv");
    }

    // Step 2: fine-tune T steps
    res.layerT = res.layer0;
    const PruneMask full = PruneMask::full(cfg.k);
    {
      Dataset storage;
      auto source = make_source(cfg, ps, streams::kTrain, storage);
      res.train_report = train(res.layerT, *source, cfg.train, route, full, cfg.train.steps);
    }
    if (!out_dir.empty()) {
      res.train_report.save_csv(out_dir / "train_report.csv");
      res.layerT.save(out_dir / "layer_finetuned.moel");
      const ProjectionReport proj = projections(res.layerT, *ps);
      proj.save_csv(out_dir / "projections.csv");
      proj.save_matrix(out_dir / "projections_router.mat");
    }

    // Pruning scores
    res.deltas = router_norm_change(res.layer0, res.layerT);
    Dataset eval_data;
    {
      Philox rng(cfg.seed, streams::kEval);
      eval_data = sample_dataset(ps, cfg.n, cfg.eval_samples, true, rng);
    }
    res.baselines = baseline_scores(res.layer0, res.layerT, eval_data, route);

    // Step 3: construct the retained set
    const std::vector<int> groups = res.layerT.sign_groups();
    const double rho = cfg.rho_list.front();
    res.decision = decide(cfg, rho, res.deltas, res.baselines, groups);
    check_feasible(cfg, res.decision.retained);
    if (!out_dir.empty())
      write_score_csv(out_dir / "scores.csv", res.deltas, groups, res.baselines, res.decision);

    // Evaluate unpruned and pruned models
    res.unpruned.accuracy = test_accuracy(res.layerT, full, eval_data, route);
    res.unpruned.flops = flops_per_sample(cfg.k, cfg.m, cfg.d, 1, cfg.n, route, full);
    res.pruned.accuracy = test_accuracy(res.layerT, res.decision.retained, eval_data, route);
    res.pruned.flops = flops_per_sample(cfg.k, cfg.m, cfg.d, 1, cfg.n, route, res.decision.retained);

    // Step 4: optional post-pruning fine-tuning
    if (cfg.train.post_prune_steps > 0) {
      res.layer_post = res.layerT;
      Dataset storage;
      auto source = make_source(cfg, ps, streams::kPostTrain, storage);
      res.post_train_report = train(*res.layer_post, *source, cfg.train, route,
                                    res.decision.retained, cfg.train.post_prune_steps);
      EvalResult fin;
      fin.accuracy = test_accuracy(*res.layer_post, res.decision.retained, eval_data, route);
      fin.flops = res.pruned.flops;
      res.finetuned = fin;
      if (!out_dir.empty()) {
        res.post_train_report.save_csv(out_dir / "post_train_report.csv");
        res.layer_post->save(out_dir / "layer_post_finetuned.moel");
      }
    }

    if (!out_dir.empty()) write_results_csv(out_dir / "results.csv", res);
    return res;
  } catch (const std::exception& e) {
    write_failure_marker(out_dir, e.what());
    throw;
  }
}

std::vector<SweepRow> run_pruning_sweep(const ExperimentConfig& cfg,
                                        const std::vector<double>& rho_values,
                                        const std::filesystem::path& out_dir) {
  cfg.validate();
  try {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    const auto ps = std::make_shared<const PatternSet>(
        build_pattern_set(cfg.d, cfg.pattern_mode, cfg.seed, cfg.irrelevant_probs));
    const RoutingConfig route{cfg.routing, cfg.l};
    const PruneMask full = PruneMask::full(cfg.k);

    // Train once...
    MoELayer layer0 = build_initial_layer(cfg);
    MoELayer layerT = layer0;
    {
      Dataset storage;
      auto source = make_source(cfg, ps, streams::kTrain, storage);
      train(layerT, *source, cfg.train, route, full, cfg.train.steps);
    }
    const std::vector<double> deltas = router_norm_change(layer0, layerT);
    Dataset eval_data;
    {
      Philox rng(cfg.seed, streams::kEval);
      eval_data = sample_dataset(ps, cfg.n, cfg.eval_samples, true, rng);
    }
    const BaselineScores baselines = baseline_scores(layer0, layerT, eval_data, route);
    const std::vector<int> groups = layerT.sign_groups();

    // ...prune many.
    std::vector<SweepRow> rows;
    for (double rho : rho_values) {
      SweepRow row;
      row.rho = rho;
      if (!(rho >= 0.0 && rho < 1.0)) {
        row.feasible = false;
        row.note = "rho outside [0,1)";
        rows.push_back(row);
        continue;
      }
      try {
        const PruneDecision decision = decide(cfg, rho, deltas, baselines, groups);
        check_feasible(cfg, decision.retained);
        row.retained = decision.retained.retained_count();
        row.accuracy_pruned = test_accuracy(layerT, decision.retained, eval_data, route);
        row.flops = flops_per_sample(cfg.k, cfg.m, cfg.d, 1, cfg.n, route, decision.retained);
        if (cfg.train.post_prune_steps > 0) {
          MoELayer tuned = layerT;
          Dataset storage;
          auto source = make_source(cfg, ps, streams::kPostTrain, storage);
          train(tuned, *source, cfg.train, route, decision.retained, cfg.train.post_prune_steps);
          row.accuracy_finetuned = test_accuracy(tuned, decision.retained, eval_data, route);
        }
      } catch (const ConfigError& e) {
        row.feasible = false;
        row.note = e.what();
      }
      rows.push_back(row);
    }

    if (!out_dir.empty()) {
      auto out = open_output(out_dir / "sweep.csv");
      out << "rho,feasible,retained,accuracy_pruned,accuracy_finetuned,routing_flops,expert_flops,"
             "total_flops,parameter_count,note\n";
      for (const SweepRow& row : rows) {
        out << fmt_double(row.rho) << ',' << (row.feasible ? 1 : 0) << ',' << row.retained << ','
            << (row.feasible ? fmt_double(row.accuracy_pruned) : std::string()) << ','
            << (row.accuracy_finetuned ? fmt_double(*row.accuracy_finetuned) : std::string()) << ','
            << row.flops.routing_flops << ',' << row.flops.expert_flops << ','
            << row.flops.total_flops << ',' << row.flops.parameter_count << ',' << row.note << "\n";
      }
      auto manifest = open_output(out_dir / "run_manifest.json");
      manifest << cfg.to_json_string() << "\n";
    }
    return rows;
  } catch (const std::exception& e) {
    write_failure_marker(out_dir, e.what());
    throw;
  }
}

}  // namespace moe
