#include "moe/train.hpp"

#include <cmath>

#include "moe/error.hpp"
#include "moe/losses.hpp"

namespace moe {

void TrainConfig::validate() const {
  if (eta_e <= 0.0 || eta_r <= 0.0) throw ConfigError("learning rates must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (steps < 0 || post_prune_steps < 0) throw ConfigError("step counts must be nonnegative");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
}

Sample OnlineSampler::next() {
  int label;
  if (balanced_)
    label = (count_ % 2 == 0) ? +1 : -1;
  else
    label = (rng_.next_u32() & 1u) ? +1 : -1;
  ++count_;
  return sample_input(ps_, n_, label, rng_);
}

Sample DatasetCycler::next() {
  const Sample& s = data_->samples[pos_];
  pos_ = (pos_ + 1) % data_->samples.size();
  return s;
}

void sgd_step(MoELayer& layer, std::span<const Sample> batch, const TrainConfig& cfg,
              const RoutingConfig& route, const PruneMask& mask) {
  if (batch.empty()) throw ContractError("sgd_step requires a non-empty batch");
  GradientBundle grads = GradientBundle::zeros(layer);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const Sample& s : batch) accumulate_sample_gradients(layer, s, route, mask, w, grads);

  for (int s = 0; s < layer.k; ++s) {
    if (!mask.retains(s)) continue;  // pruned experts stay bit-identical
    Vec& router = layer.routers[static_cast<std::size_t>(s)];
    const Vec& rg = grads.router[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < router.size(); ++i) router[i] -= cfg.eta_r * rg[i];
    Vec& h = layer.hidden[static_cast<std::size_t>(s)];
    const Vec& ng = grads.neuron[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < h.size(); ++i) h[i] -= cfg.eta_e * ng[i];
  }
}

TrainReport train(MoELayer& layer, SampleSource& source, const TrainConfig& cfg,
                  const RoutingConfig& route, const PruneMask& mask, int steps) {
  cfg.validate();
  if (steps < 0) throw ConfigError("steps must be nonnegative");

  TrainReport report;
  std::vector<Sample> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));

  for (int t = 0; t < steps; ++t) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(source.next());

    const bool log = (t % cfg.log_every == 0) || t == steps - 1;
    double hinge = 0.0, err = 0.0;
    if (log) {
      for (const Sample& s : batch) {
        const double f = classify(layer, s, route, mask);
        hinge += loss_hinge(f, s.label);
        if (s.label * f <= 0.0) err += 1.0;
      }
      hinge /= static_cast<double>(cfg.batch_size);
      err /= static_cast<double>(cfg.batch_size);
    }

    sgd_step(layer, batch, cfg, route, mask);

    if (log) {
      report.step.push_back(t);
      report.hinge_loss.push_back(hinge);
      report.train_error.push_back(err);
      std::vector<double> norms(static_cast<std::size_t>(layer.k));
      for (int s = 0; s < layer.k; ++s) norms[static_cast<std::size_t>(s)] =
          l2_norm(layer.routers[static_cast<std::size_t>(s)]);
      report.router_norms.push_back(std::move(norms));
    }
  }
  return report;
}

void TrainReport::save_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  out << "step,hinge_loss,train_error";
  const int k = router_norms.empty() ? 0 : static_cast<int>(router_norms.front().size());
  for (int s = 0; s < k; ++s) out << ",router_norm_" << (s + 1);
  out << "\n";
  for (std::size_t i = 0; i < step.size(); ++i) {
    out << step[i] << ',' << fmt_double(hinge_loss[i]) << ',' << fmt_double(train_error[i]);
    for (double norm : router_norms[i]) out << ',' << fmt_double(norm);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace moe
