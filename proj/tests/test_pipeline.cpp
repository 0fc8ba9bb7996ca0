#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "moe/error.hpp"
#include "moe/pipeline.hpp"

using namespace moe;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("moeprune_pipe_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.d = 24;
  cfg.n = 12;
  cfg.k = 4;
  cfg.m = 4;
  cfg.l = 2;
  cfg.positive_experts = 2;
  cfg.train.steps = 60;
  cfg.train.batch_size = 8;
  cfg.train.eta_e = 0.05;
  cfg.train.eta_r = 0.02;
  cfg.train.log_every = 10;
  cfg.eval_samples = 200;
  cfg.proficiency_samples = 50;
  cfg.rho_list = {0.5};
  cfg.seed = 11;
  return cfg;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config JSON round-trip is stable") {
  ExperimentConfig cfg = tiny_config();
  cfg.init = InitMode::Planted;
  cfg.criterion = PruneCriterion::RouterMagnitude;
  cfg.routing = RoutingMode::TokenChoice;
  cfg.grouping = Grouping::WholeLayer;
  cfg.rho_list = {0.0, 0.25, 0.5};
  const std::string a = cfg.to_json_string();
  const ExperimentConfig back = ExperimentConfig::from_json_string(a);
  CHECK(back.to_json_string() == a);
  CHECK(back.criterion == PruneCriterion::RouterMagnitude);
  CHECK(back.routing == RoutingMode::TokenChoice);
  CHECK(back.rho_list == cfg.rho_list);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string("{ nope"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_string(R"({"model":{"k":1}})"), ConfigError);
}

TEST_CASE("rho = 0 with no post-tuning is the identity pipeline") {
  ExperimentConfig cfg = tiny_config();
  cfg.rho_list = {0.0};
  const PipelineResult res = run_full_pipeline(cfg);
  CHECK(res.decision.retained.retained_count() == cfg.k);
  CHECK(res.pruned.accuracy == res.unpruned.accuracy);
  CHECK(res.pruned.flops.total_flops == res.unpruned.flops.total_flops);
  // f values agree within 1e-12 between masked-full and unpruned paths
  auto ps = std::make_shared<const PatternSet>(
      build_pattern_set(cfg.d, cfg.pattern_mode, cfg.seed));
  Philox rng(cfg.seed, streams::kEval);
  const Dataset eval = sample_dataset(ps, cfg.n, 50, true, rng);
  const RoutingConfig route{cfg.routing, cfg.l};
  for (const Sample& s : eval.samples) {
    const double a = classify(res.layerT, s, route, PruneMask::full(cfg.k));
    const double b = classify(res.layerT, s, route, res.decision.retained);
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("planted mode satisfies the pretrained-model assumptions") {
  ExperimentConfig cfg = tiny_config();
  cfg.init = InitMode::Planted;
  cfg.plant.experts_per_group = 1;
  const MoELayer layer0 = build_initial_layer(cfg);
  auto ps = std::make_shared<const PatternSet>(
      build_pattern_set(cfg.d, cfg.pattern_mode, cfg.seed));
  Philox rng(cfg.seed, streams::kProficiency);
  const ProficiencyReport prof =
      estimate_proficiency(layer0, ps, cfg.n, RoutingConfig{cfg.routing, cfg.l}, 300, rng);
  const AssumptionReport rep = check_assumptions(layer0, *ps, prof, 0.5, 0.05);

  CHECK(rep.expert_class[0] == ExpertClass::Important);
  CHECK(rep.expert_class[2] == ExpertClass::Important);  // first of S2
  CHECK(prof.p1[0] == 1.0);
  CHECK(prof.p2[2] == 1.0);
  // margin >= plant strength minus the init noise bound (8 std covers d coords)
  const double noise_bound = 8.0 * cfg.train.init_router_std;
  CHECK(rep.separation_margin[0] >= cfg.plant.router_strength - noise_bound);
  CHECK(rep.separation_margin[2] >= cfg.plant.router_strength - noise_bound);
  CHECK(rep.activated_fraction[0] >= 0.5);
  CHECK(rep.activated_fraction[2] >= 0.5);
}

TEST_CASE("pipeline writes the documented reports; reruns are byte-identical") {
  TempDir a("a"), b("b");
  ExperimentConfig cfg = tiny_config();
  cfg.train.post_prune_steps = 10;
  run_full_pipeline(cfg, a.path);
  run_full_pipeline(cfg, b.path);
  const std::vector<std::string> files = {
      "run_manifest.json", "train_report.csv",   "scores.csv",
      "results.csv",       "proficiency_initial.csv", "assumptions.csv",
      "projections.csv",   "projections_router.mat",  "post_train_report.csv",
      "layer_initial.moel", "layer_finetuned.moel",   "layer_post_finetuned.moel"};
  for (const std::string& f : files) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(a.path / f));
    CHECK(file_bytes(a.path / f) == file_bytes(b.path / f));
  }
  CHECK_FALSE(std::filesystem::exists(a.path / "FAILED"));
}

TEST_CASE("sweep: rho = 0 row matches the full pipeline run") {
  ExperimentConfig cfg = tiny_config();
  const PipelineResult run = run_full_pipeline(cfg);
  const auto rows = run_pruning_sweep(cfg, {0.0, 0.5, 1.2});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].feasible);
  CHECK(rows[0].retained == cfg.k);
  CHECK(rows[0].accuracy_pruned == run.unpruned.accuracy);
  CHECK(rows[1].feasible);
  CHECK_FALSE(rows[2].feasible);  // rho outside [0,1) becomes a warning row

  // expert-choice: flops strictly decreasing and affine in retained count
  CHECK(rows[1].flops.total_flops < rows[0].flops.total_flops);
}

TEST_CASE("token-choice whole-layer pruning must retain at least l experts") {
  ExperimentConfig cfg = tiny_config();
  cfg.routing = RoutingMode::TokenChoice;
  cfg.grouping = Grouping::WholeLayer;
  cfg.l = 2;
  cfg.rho_list = {0.8};  // would retain 1 < l
  CHECK_THROWS_AS(run_full_pipeline(cfg), ConfigError);

  const auto rows = run_pruning_sweep(cfg, {0.8});
  REQUIRE(rows.size() == 1);
  CHECK_FALSE(rows[0].feasible);
}

TEST_CASE("failure marker is written when a run dies midway") {
  TempDir tmp("fail");
  ExperimentConfig cfg = tiny_config();
  cfg.routing = RoutingMode::TokenChoice;
  cfg.grouping = Grouping::WholeLayer;
  cfg.rho_list = {0.9};
  CHECK_THROWS_AS(run_full_pipeline(cfg, tmp.path), ConfigError);
  CHECK(std::filesystem::exists(tmp.path / "FAILED"));
}

TEST_CASE("random criterion produces a mask of the same cardinality") {
  ExperimentConfig cfg = tiny_config();
  cfg.criterion = PruneCriterion::Random;
  const PipelineResult res = run_full_pipeline(cfg);
  CHECK(res.decision.retained.retained_count() == 2);
}

TEST_CASE("importance criterion demands token-choice") {
  ExperimentConfig cfg = tiny_config();
  cfg.criterion = PruneCriterion::Importance;
  CHECK_THROWS_AS(run_full_pipeline(cfg), ConfigError);
  cfg.routing = RoutingMode::TokenChoice;
  CHECK_NOTHROW(run_full_pipeline(cfg));
}
