#pragma once

#include <optional>

#include "moe/manifest.hpp"
#include "moe/metrics.hpp"
#include "moe/train.hpp"

namespace moe {

enum class InitMode { Random, Planted };

/// Planted initialization: adds a task-pattern component to the routers and
/// to the first half of the neurons of the designated experts (the leading
/// ones of each sign group), so the pretrained-model assumptions hold.
struct PlantConfig {
  int experts_per_group{2};
  double router_strength{1.0};
  double neuron_strength{0.01};
  double neuron_fraction{0.5};
};

/// Everything one experiment needs; serializes to/from JSON. Derived RNG
/// streams (init, training batches, evaluation, ...) all come from `seed`.
struct ExperimentConfig {
  // data
  int d{200};
  int n{100};
  PatternMode pattern_mode{PatternMode::StandardBasis};
  std::vector<double> irrelevant_probs;  // empty = uniform

  // model
  int k{20};
  int m{16};
  RoutingMode routing{RoutingMode::ExpertChoice};
  int l{5};
  int positive_experts{10};
  InitMode init{InitMode::Random};
  PlantConfig plant;

  // training
  TrainConfig train;
  bool online{true};
  bool online_balanced{true};
  int train_samples{4096};  // epoch-mode dataset size

  // pruning
  std::vector<double> rho_list{0.5};
  Grouping grouping{Grouping::BySignGroup};
  PruneCriterion criterion{PruneCriterion::Delta};

  // evaluation
  int eval_samples{10000};
  int proficiency_samples{2000};
  double important_threshold{0.5};
  double unimportant_threshold{0.05};

  std::uint64_t seed{1};

  void validate() const;
  std::string to_json_string() const;
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct EvalResult {
  double accuracy{0.0};
  FlopsReport flops;
};

struct PipelineResult {
  MoELayer layer0;  // initialized (pre-trained analog)
  MoELayer layerT;  // fine-tuned
  std::optional<MoELayer> layer_post;  // after post-pruning fine-tuning
  TrainReport train_report;
  TrainReport post_train_report;
  ProficiencyReport proficiency0;
  AssumptionReport assumptions;
  std::vector<double> deltas;
  BaselineScores baselines;
  PruneDecision decision;
  EvalResult unpruned;
  EvalResult pruned;
  std::optional<EvalResult> finetuned;
  double gamma{0.0};
};

/// RNG stream ids derived from the experiment seed; documented so runs can be
/// reproduced piecewise.
namespace streams {
constexpr std::uint64_t kPatterns = 0;
constexpr std::uint64_t kInit = 1;
constexpr std::uint64_t kTrain = 2;
constexpr std::uint64_t kEval = 3;
constexpr std::uint64_t kProficiency = 4;
constexpr std::uint64_t kRandomMask = 5;
constexpr std::uint64_t kPostTrain = 6;
}  // namespace streams

/// Builds the initialized layer for a config (Step 1 of the pruning
/// algorithm: random Gaussian or planted).
MoELayer build_initial_layer(const ExperimentConfig& cfg);

/// Full pipeline at rho_list[0]: init, fine-tune T steps, score, prune,
/// evaluate, optionally fine-tune T' steps post-pruning and re-evaluate.
/// Writes CSV reports and a run manifest into out_dir unless it is empty.
PipelineResult run_full_pipeline(const ExperimentConfig& cfg,
                                 const std::filesystem::path& out_dir = {});

struct SweepRow {
  double rho{0.0};
  bool feasible{true};
  std::string note;
  int retained{0};
  double accuracy_pruned{0.0};
  std::optional<double> accuracy_finetuned;
  FlopsReport flops;
};

/// Trains once, then prunes and evaluates at every rho. Infeasible ratios
/// produce warning rows instead of aborting the sweep.
std::vector<SweepRow> run_pruning_sweep(const ExperimentConfig& cfg,
                                        const std::vector<double>& rho_values,
                                        const std::filesystem::path& out_dir = {});

}  // namespace moe
