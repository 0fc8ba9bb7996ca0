#pragma once

#include <filesystem>
#include <memory>

#include "moe/gradients.hpp"

namespace moe {

struct TrainConfig {
  double eta_e{0.05};   // expert (hidden neuron) learning rate
  double eta_r{0.01};   // router learning rate
  int batch_size{32};
  int steps{0};             // T
  int post_prune_steps{0};  // T'
  std::uint64_t seed{0};
  double init_router_std{1e-4};
  double init_neuron_std{1e-2};
  int log_every{1};

  void validate() const;
};

/// Logged training trajectory. Loss and error are batch means at the
/// pre-update weights of the logged step; router norms are post-update.
struct TrainReport {
  std::vector<int> step;
  std::vector<double> hinge_loss;
  std::vector<double> train_error;
  std::vector<std::vector<double>> router_norms;  // one row of k norms per logged step

  int logged_steps() const { return static_cast<int>(step.size()); }
  void save_csv(const std::filesystem::path& path) const;
};

/// Stream of training samples; online draws are fresh i.i.d., epoch mode
/// cycles a fixed dataset.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual Sample next() = 0;
};

/// Fresh draws from the data distribution. Balanced mode alternates labels
/// so every even-sized batch is class-balanced.
class OnlineSampler : public SampleSource {
 public:
  OnlineSampler(PatternSetPtr ps, int n, Philox rng, bool balanced = true)
      : ps_(std::move(ps)), n_(n), rng_(rng), balanced_(balanced) {}
  Sample next() override;

 private:
  PatternSetPtr ps_;
  int n_;
  Philox rng_;
  bool balanced_;
  long count_{0};
};

/// Cycles a fixed dataset in order.
class DatasetCycler : public SampleSource {
 public:
  explicit DatasetCycler(const Dataset& data) : data_(&data) {}
  Sample next() override;

 private:
  const Dataset* data_;
  std::size_t pos_{0};
};

/// One SGD step on the batch mean of the closed-form gradients: routers move
/// by eta_r, neurons by eta_e, heads are frozen, pruned experts untouched.
void sgd_step(MoELayer& layer, std::span<const Sample> batch, const TrainConfig& cfg,
              const RoutingConfig& route, const PruneMask& mask);

/// Runs `steps` SGD steps, logging every cfg.log_every steps (and the last).
TrainReport train(MoELayer& layer, SampleSource& source, const TrainConfig& cfg,
                  const RoutingConfig& route, const PruneMask& mask, int steps);

}  // namespace moe
