#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "moe/prune.hpp"

namespace moe {

/// Reference to one raw tensor: `length` little-endian 64-bit floats at
/// `offset` bytes into `path`. Relative paths resolve against the manifest
/// file's directory.
struct TensorRef {
  std::string path;
  std::uint64_t offset{0};
  std::uint64_t length{0};  // element count; must equal dim
  int dim{0};
};

struct ExpertCheckpoint {
  TensorRef pre;   // pre-trained router
  TensorRef post;  // fine-tuned router
  std::vector<TensorRef> pre_neurons;   // optional, enable neuron baselines
  std::vector<TensorRef> post_neurons;
};

struct LayerCheckpoint {
  std::string name;
  std::vector<ExpertCheckpoint> experts;
};

/// JSON description of router (and optional neuron) tensors for offline
/// scoring of existing checkpoints.
struct CheckpointManifest {
  std::vector<LayerCheckpoint> layers;
  std::filesystem::path base_dir;  // set on load; resolves relative tensor paths

  static CheckpointManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct LayerScoreTable {
  std::string name;
  std::vector<double> delta;
  std::vector<double> router_magnitude;
  std::vector<double> avg_neuron_magnitude;       // NaN when neurons absent
  std::vector<double> avg_change_neuron_magnitude;
  bool has_neurons{false};
  PruneDecision plan;  // whole-layer ranking at the requested rho

  void save_csv(const std::filesystem::path& path) const;
};

/// Scores every layer of the manifest: Delta_s per expert, magnitude
/// baselines when neuron tensors are present, and a whole-layer pruning plan
/// at `rho`.
std::vector<LayerScoreTable> score_checkpoints(const CheckpointManifest& manifest, double rho);

/// Reads one referenced tensor; IoError on missing/short files, ManifestError
/// on length/dim disagreements.
Vec read_tensor(const TensorRef& ref, const std::filesystem::path& base_dir);

}  // namespace moe
