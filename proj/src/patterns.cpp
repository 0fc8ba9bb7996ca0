#include "moe/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moe/binio.hpp"
#include "moe/error.hpp"

namespace moe {

namespace {

std::vector<Vec> coordinate_basis(int d) {
  std::vector<Vec> p(d, Vec(d, 0.0));
  for (int i = 0; i < d; ++i) p[i][i] = 1.0;
  return p;
}

// Gaussian draws orthonormalized by modified Gram-Schmidt, run twice per
// vector; a second pass is what actually buys the 1e-12 pairwise tolerance
// at d in the hundreds.
std::vector<Vec> random_orthonormal(int d, Philox& rng) {
  std::vector<Vec> p;
  p.reserve(d);
  for (int i = 0; i < d; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
      Vec v(d);
      for (double& x : v) x = rng.next_gaussian();
      for (int pass = 0; pass < 2; ++pass) {
        for (const Vec& q : p) {
          const double c = dot(v, q);
          for (int t = 0; t < d; ++t) v[t] -= c * q[t];
        }
      }
      const double nrm = l2_norm(v);
      if (nrm > 1e-8) {
        for (double& x : v) x /= nrm;
        p.push_back(std::move(v));
        placed = true;
      }
    }
    if (!placed) throw NumericError("orthonormalization failed: rank deficiency at vector " + std::to_string(i));
  }
  return p;
}

}  // namespace

PatternSet build_pattern_set(int d, PatternMode mode, std::uint64_t seed,
                             std::vector<double> irrelevant_probs, double max_prob_factor) {
  if (d < 4) throw ConfigError("pattern set requires d >= 4, got " + std::to_string(d));

  PatternSet ps;
  ps.d_ = d;
  ps.mode_ = mode;
  ps.seed_ = seed;

  if (mode == PatternMode::StandardBasis) {
    ps.patterns_ = coordinate_basis(d);
  } else {
    Philox rng(seed, /*stream=*/0);
    ps.patterns_ = random_orthonormal(d, rng);
  }

  if (irrelevant_probs.empty()) {
    ps.irr_probs_.assign(static_cast<std::size_t>(d) - 2, 1.0 / (d - 2));
    ps.uniform_ = true;
  } else {
    if (static_cast<int>(irrelevant_probs.size()) != d - 2)
      throw ConfigError("irrelevant_probs must have d-2 entries");
    ps.irr_probs_ = std::move(irrelevant_probs);
    ps.uniform_ = false;
    ps.irr_cum_.resize(ps.irr_probs_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < ps.irr_probs_.size(); ++i) {
      acc += ps.irr_probs_[i];
      ps.irr_cum_[i] = acc;
    }
  }

  ps.validate(max_prob_factor);
  return ps;
}

int PatternSet::sample_irrelevant(Philox& rng) const {
  if (uniform_) return 2 + rng.next_index(d_ - 2);
  const double u = rng.next_double();
  const auto it = std::lower_bound(irr_cum_.begin(), irr_cum_.end(), u);
  const auto slot = std::min<std::size_t>(static_cast<std::size_t>(it - irr_cum_.begin()),
                                          irr_cum_.size() - 1);
  return 2 + static_cast<int>(slot);
}

void PatternSet::validate(double max_prob_factor) const {
  for (int i = 0; i < d_; ++i) {
    if (std::abs(l2_norm(patterns_[i]) - 1.0) > kOrthoTol)
      throw NumericError("pattern " + std::to_string(i) + " is not unit norm");
    for (int j = i + 1; j < d_; ++j) {
      if (std::abs(moe::dot(patterns_[i], patterns_[j])) > kOrthoTol)
        throw NumericError("patterns " + std::to_string(i) + "," + std::to_string(j) +
                           " are not orthogonal");
    }
  }
  double sum = 0.0;
  for (double p : irr_probs_) {
    if (p < 0.0) throw ConfigError("negative irrelevant-pattern probability");
    if (p > max_prob_factor / d_)
      throw ConfigError("irrelevant-pattern probability exceeds " +
                        fmt_double(max_prob_factor) + "/d");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("irrelevant-pattern probabilities must sum to 1");
}

void PatternSet::save(const std::filesystem::path& path) const {
  auto out = open_output(path);
  binio::put_magic(out, "MOEP1");
  binio::put_u32(out, static_cast<std::uint32_t>(d_));
  binio::put_u32(out, mode_ == PatternMode::StandardBasis ? 0u : 1u);
  binio::put_u64(out, seed_);
  for (const Vec& p : patterns_)
    for (double x : p) binio::put_f64(out, x);
  if (!out) throw IoError("write failed: " + path.string());
}

PatternSet PatternSet::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  binio::expect_magic(in, "MOEP1", path.string());
  const int d = static_cast<int>(binio::get_u32(in, path.string()));
  const std::uint32_t mode_tag = binio::get_u32(in, path.string());
  if (d < 4) throw IoError("pattern file with d < 4: " + path.string());
  if (mode_tag > 1) throw IoError("unknown pattern mode tag in " + path.string());

  PatternSet ps;
  ps.d_ = d;
  ps.mode_ = mode_tag == 0 ? PatternMode::StandardBasis : PatternMode::RandomOrthonormal;
  ps.seed_ = binio::get_u64(in, path.string());
  ps.patterns_.assign(d, Vec(d));
  for (Vec& p : ps.patterns_)
    for (double& x : p) x = binio::get_f64(in, path.string());
  ps.irr_probs_.assign(static_cast<std::size_t>(d) - 2, 1.0 / (d - 2));
  ps.uniform_ = true;
  ps.validate();
  return ps;
}

}  // namespace moe
