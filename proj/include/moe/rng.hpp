#pragma once

#include <array>
#include <cstdint>

namespace moe {

/// Counter-based pseudo-random generator (Philox4x32-10, Salmon et al. 2011).
///
/// Outputs are a pure function of (seed, stream, counter), so any stream can
/// be reproduced on any platform or language from those three integers.
/// `split` hands out independent streams of the same seed; generation within
/// a stream is sequential. Dataset and weight files are the compatibility
/// boundary for reimplementations; the raw stream layout is documented in the
/// README for completeness.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform double in [0, 1), 53 random bits.
  double next_double();

  /// Standard normal via Box-Muller (explicit so streams stay portable).
  double next_gaussian();
  double next_gaussian(double stddev) { return stddev * next_gaussian(); }

  /// Uniform integer in {0, ..., n-1}, unbiased (rejection sampling).
  int next_index(int n);

  /// Fresh generator on the same seed but an independent stream.
  Philox split(std::uint64_t stream) const { return Philox(seed_, stream); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// One Philox4x32-10 block; exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t seed_{0};
  std::uint64_t stream_{0};
  std::uint64_t counter_{0};
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_{4};
  double spare_gauss_{0.0};
  bool has_spare_{false};
};

}  // namespace moe
