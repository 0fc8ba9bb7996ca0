#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "moe/patterns.hpp"

namespace moe {

/// One tokenized input. Tokens are stored as indices into the pattern set;
/// exactly one token is a task pattern and it matches the label.
struct Sample {
  PatternSetPtr patterns;
  std::vector<std::uint32_t> tokens;
  std::int8_t label{+1};
  std::uint32_t task_pos{0};

  int n() const { return static_cast<int>(tokens.size()); }
  int dim() const { return patterns->dim(); }

  /// <w, x^(j)>
  double token_dot(std::span<const double> w, int j) const {
    return patterns->dot(w, static_cast<int>(tokens[j]));
  }
};

struct Dataset {
  PatternSetPtr patterns;
  std::vector<Sample> samples;
  std::uint64_t seed{0};

  int size() const { return static_cast<int>(samples.size()); }

  void save(const std::filesystem::path& path) const;
  static Dataset load(const std::filesystem::path& path, PatternSetPtr patterns);
};

/// Draws one sample: the task token (o1 for +1, o2 for -1) at a uniform
/// position, remaining positions filled i.i.d. from the irrelevant-pattern
/// distribution (position first, then fills in ascending position order).
Sample sample_input(const PatternSetPtr& ps, int n, int label, Philox& rng);

/// `balanced` alternates labels starting with +1; otherwise labels are
/// drawn uniformly.
Dataset sample_dataset(const PatternSetPtr& ps, int n, int count, bool balanced, Philox& rng);

}  // namespace moe
