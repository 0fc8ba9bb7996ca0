// moeprune: train, prune and score sparse mixture-of-experts layers by the
// change of router l2 norm, with importance/magnitude baselines.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moe/gradients.hpp"
#include "moe/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitIo = 3;

std::vector<double> parse_rho_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw moe::ConfigError("empty --rho list");
  return out;
}

moe::ExperimentConfig load_config(const std::string& path, std::uint64_t seed_override,
                                  bool has_seed, const std::string& criterion,
                                  const std::string& rho) {
  moe::ExperimentConfig cfg =
      path.empty() ? moe::ExperimentConfig{} : moe::ExperimentConfig::load(path);
  if (has_seed) {
    cfg.seed = seed_override;
    cfg.train.seed = seed_override;
  }
  if (!criterion.empty()) cfg.criterion = moe::parse_criterion(criterion);
  if (!rho.empty()) cfg.rho_list = parse_rho_list(rho);
  cfg.validate();
  return cfg;
}

int cmd_run(const moe::ExperimentConfig& cfg, const std::string& out_dir) {
  const moe::PipelineResult res = moe::run_full_pipeline(cfg, out_dir);
  std::printf("gamma %s\n", moe::fmt_double(res.gamma).c_str());
  std::printf("rho %s retained %d/%d\n", moe::fmt_double(res.decision.rho).c_str(),
              res.decision.retained.retained_count(), res.decision.retained.k);
  std::printf("accuracy unpruned %s pruned %s", moe::fmt_double(res.unpruned.accuracy).c_str(),
              moe::fmt_double(res.pruned.accuracy).c_str());
  if (res.finetuned)
    std::printf(" finetuned %s", moe::fmt_double(res.finetuned->accuracy).c_str());
  std::printf("\n");
  std::printf("flops unpruned %lld pruned %lld\n",
              static_cast<long long>(res.unpruned.flops.total_flops),
              static_cast<long long>(res.pruned.flops.total_flops));
  if (!res.train_report.train_error.empty())
    std::printf("final train error %s\n",
                moe::fmt_double(res.train_report.train_error.back()).c_str());
  return kExitOk;
}

int cmd_sweep(const moe::ExperimentConfig& cfg, const std::string& out_dir) {
  const auto rows = moe::run_pruning_sweep(cfg, cfg.rho_list, out_dir);
  for (const moe::SweepRow& row : rows) {
    if (!row.feasible) {
      std::printf("rho %s skipped: %s\n", moe::fmt_double(row.rho).c_str(), row.note.c_str());
      continue;
    }
    std::printf("rho %s retained %d accuracy %s flops %lld\n", moe::fmt_double(row.rho).c_str(),
                row.retained, moe::fmt_double(row.accuracy_pruned).c_str(),
                static_cast<long long>(row.flops.total_flops));
  }
  return kExitOk;
}

int cmd_score(const std::string& manifest_path, double rho, const std::string& out_dir) {
  const moe::CheckpointManifest manifest = moe::CheckpointManifest::load(manifest_path);
  const auto tables = moe::score_checkpoints(manifest, rho);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (const moe::LayerScoreTable& t : tables) {
    std::printf("layer %s:", t.name.c_str());
    for (std::size_t s = 0; s < t.delta.size(); ++s)
      std::printf(" %s%s", moe::fmt_double(t.delta[s]).c_str(),
                  t.plan.retained.retains(static_cast<int>(s)) ? "*" : "");
    std::printf("\n");
    if (!out_dir.empty())
      t.save_csv(std::filesystem::path(out_dir) / ("scores_" + t.name + ".csv"));
  }
  return kExitOk;
}

// Finite-difference gradient suite over random small instances per routing
// mode; the same check the test suite runs, exposed for quick verification.
int cmd_gradcheck(int instances, std::uint64_t seed, double eps, double tolerance) {
  using namespace moe;
  int failures = 0;
  for (RoutingMode mode : {RoutingMode::ExpertChoice, RoutingMode::TokenChoice}) {
    double worst = 0.0;
    int flips = 0;
    for (int i = 0; i < instances; ++i) {
      Philox rng(seed, 1000 + i);
      const int d = 6 + rng.next_index(11);
      const int n = 3 + rng.next_index(6);
      const int k = 2 + rng.next_index(3);
      const int m = 2 + rng.next_index(5);
      const int l = 1 + rng.next_index(mode == RoutingMode::TokenChoice ? std::min(2, k)
                                                                        : std::min(2, n));
      auto ps = std::make_shared<const PatternSet>(
          build_pattern_set(std::max(d, n), PatternMode::RandomOrthonormal, rng.next_u64()));
      MoELayer layer = make_analyzed_layer(k, m, ps->dim(), 1 + rng.next_index(k - 1));
      init_gaussian(layer, 0.4, 0.4, rng);
      const Sample sample = sample_input(ps, n, rng.next_index(2) ? 1 : -1, rng);
      const RoutingConfig cfg{mode, l};
      const PruneMask mask = PruneMask::full(k);

      const FiniteDiffResult fd = finite_difference_gradients(layer, sample, cfg, mask, eps);
      if (fd.selection_flip) {
        ++flips;  // non-differentiable point; skip like the tests do
        continue;
      }
      const GradientBundle closed = sample_gradients(layer, sample, cfg, mask);
      const double err = relative_gradient_error(closed, fd.grads, mask);
      worst = std::max(worst, err);
      if (err >= tolerance) ++failures;
    }
    std::printf("%s: %d instances, %d selection flips skipped, max rel err %s\n",
                mode == RoutingMode::ExpertChoice ? "expert_choice" : "token_choice", instances,
                flips, fmt_double(worst).c_str());
  }
  if (failures > 0) {
    std::fprintf(stderr, "gradcheck: %d instances exceeded tolerance\n", failures);
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert pruning for sparse MoE layers by change of router l2 norm"};
  app.require_subcommand(1);

  std::string config_path, out_dir, criterion, rho_text;
  std::uint64_t seed = 0;
  bool has_seed = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--out", out_dir, "output directory for reports");
    cmd->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
      has_seed = true;
    });
    cmd->add_option("--criterion", criterion,
                    "delta|importance|router_magnitude|neuron_magnitude|neuron_change|random");
    cmd->add_option("--rho", rho_text, "comma-separated pruning ratios");
  };

  CLI::App* run = app.add_subcommand("run", "full pipeline: init, train, prune, evaluate");
  add_common(run);
  CLI::App* sweep = app.add_subcommand("sweep", "train once, prune and evaluate at every rho");
  add_common(sweep);

  CLI::App* score = app.add_subcommand("score", "score checkpoint tensors from a manifest");
  std::string manifest_path;
  double score_rho = 0.5;
  score->add_option("--config,--manifest", manifest_path, "checkpoint manifest JSON")->required();
  score->add_option("--rho", score_rho, "pruning ratio for the emitted plan");
  score->add_option("--out", out_dir, "output directory for ranking CSVs");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  int gc_instances = 100;
  std::uint64_t gc_seed = 7;
  double gc_eps = 1e-6, gc_tol = 1e-4;
  gradcheck->add_option("--instances", gc_instances, "instances per routing mode");
  gradcheck->add_option("--seed", gc_seed, "suite seed");
  gradcheck->add_option("--eps", gc_eps, "finite-difference step");
  gradcheck->add_option("--tolerance", gc_tol, "relative error bound");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(load_config(config_path, seed, has_seed, criterion, rho_text), out_dir);
    if (sweep->parsed())
      return cmd_sweep(load_config(config_path, seed, has_seed, criterion, rho_text), out_dir);
    if (score->parsed()) return cmd_score(manifest_path, score_rho, out_dir);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_instances, gc_seed, gc_eps, gc_tol);
  } catch (const moe::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const moe::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
