#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "moe/data.hpp"
#include "moe/error.hpp"

using namespace moe;

namespace {

PatternSetPtr make_ps(int d, PatternMode mode = PatternMode::StandardBasis, std::uint64_t seed = 0) {
  return std::make_shared<const PatternSet>(build_pattern_set(d, mode, seed));
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("n=1 sample is the bare task token") {
  auto ps = make_ps(4);
  Philox rng(0, 0);
  const Sample s = sample_input(ps, 1, +1, rng);
  CHECK(s.n() == 1);
  CHECK(s.task_pos == 0);
  CHECK(s.tokens[0] == static_cast<std::uint32_t>(ps->task1_index()));
}

TEST_CASE("exactly one task token and it matches the label") {
  auto ps = make_ps(200);
  Philox rng(1, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int label = trial % 2 == 0 ? +1 : -1;
    const Sample s = sample_input(ps, 100, label, rng);
    int count_o1 = 0, count_o2 = 0;
    for (std::uint32_t t : s.tokens) {
      if (t == 0) ++count_o1;
      if (t == 1) ++count_o2;
    }
    CHECK(count_o1 == (label > 0 ? 1 : 0));
    CHECK(count_o2 == (label > 0 ? 0 : 1));
    CHECK(s.tokens[s.task_pos] == (label > 0 ? 0u : 1u));
  }
}

TEST_CASE("n > d is a configuration error") {
  auto ps = make_ps(8);
  Philox rng(0, 0);
  CHECK_THROWS_AS(sample_input(ps, 9, +1, rng), ConfigError);
  CHECK_THROWS_AS(sample_input(ps, 4, 0, rng), ConfigError);
}

TEST_CASE("per-token irrelevant frequencies stay within 3 sigma") {
  auto ps = make_ps(8);
  Philox rng(17, 0);
  const int draws = 100000;
  const int n = 4;
  std::vector<long> counts(8, 0);
  long irrelevant_tokens = 0;
  for (int i = 0; i < draws / n; ++i) {
    const Sample s = sample_input(ps, n, i % 2 ? +1 : -1, rng);
    for (int j = 0; j < n; ++j) {
      if (j == static_cast<int>(s.task_pos)) continue;
      ++counts[s.tokens[static_cast<std::size_t>(j)]];
      ++irrelevant_tokens;
    }
  }
  const double p = 1.0 / 6.0;  // uniform over the 6 irrelevant patterns
  const double sigma = std::sqrt(static_cast<double>(irrelevant_tokens) * p * (1 - p));
  for (int i = 2; i < 8; ++i)
    CHECK(std::abs(static_cast<double>(counts[static_cast<std::size_t>(i)]) -
                   irrelevant_tokens * p) < 3 * sigma);
}

TEST_CASE("task position is uniform over [n]") {
  auto ps = make_ps(16);
  Philox rng(23, 0);
  const int n = 8, trials = 80000;
  std::vector<long> counts(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < trials; ++i) ++counts[sample_input(ps, n, +1, rng).task_pos];
  const double p = 1.0 / n;
  const double sigma = std::sqrt(trials * p * (1 - p));
  for (long c : counts) CHECK(std::abs(static_cast<double>(c) - trials * p) < 4 * sigma);
}

TEST_CASE("balanced datasets alternate labels") {
  auto ps = make_ps(8);
  Philox rng(2, 0);
  const Dataset two = sample_dataset(ps, 4, 2, true, rng);
  CHECK(two.samples[0].label == +1);
  CHECK(two.samples[1].label == -1);

  const Dataset big = sample_dataset(ps, 4, 1000, true, rng);
  int pos = 0;
  for (const Sample& s : big.samples) pos += s.label > 0 ? 1 : 0;
  CHECK(pos == 500);
}

TEST_CASE("unbalanced label counts stay within 3 sigma of half") {
  auto ps = make_ps(8);
  Philox rng(3, 0);
  const Dataset ds = sample_dataset(ps, 4, 1000, false, rng);
  int pos = 0;
  for (const Sample& s : ds.samples) pos += s.label > 0 ? 1 : 0;
  const double sigma = std::sqrt(1000 * 0.25);
  CHECK(std::abs(pos - 500.0) < 3 * sigma);
}

TEST_CASE("identical seeds produce byte-identical dataset files") {
  auto ps = make_ps(12);
  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = dir / "moeprune_ds_a.moed";
  const auto p2 = dir / "moeprune_ds_b.moed";
  {
    Philox rng(99, 0);
    sample_dataset(ps, 6, 64, true, rng).save(p1);
  }
  {
    Philox rng(99, 0);
    sample_dataset(ps, 6, 64, true, rng).save(p2);
  }
  CHECK(file_bytes(p1) == file_bytes(p2));

  {
    Philox rng(100, 0);
    sample_dataset(ps, 6, 64, true, rng).save(p2);
  }
  CHECK(file_bytes(p1) != file_bytes(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("dataset round-trips through MOED1 files") {
  auto ps = make_ps(12);
  Philox rng(5, 0);
  const Dataset ds = sample_dataset(ps, 6, 32, false, rng);
  const auto path = std::filesystem::temp_directory_path() / "moeprune_ds_rt.moed";
  ds.save(path);
  const Dataset back = Dataset::load(path, ps);
  REQUIRE(back.size() == ds.size());
  for (int i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[static_cast<std::size_t>(i)].label ==
          ds.samples[static_cast<std::size_t>(i)].label);
    CHECK(back.samples[static_cast<std::size_t>(i)].task_pos ==
          ds.samples[static_cast<std::size_t>(i)].task_pos);
    CHECK(back.samples[static_cast<std::size_t>(i)].tokens ==
          ds.samples[static_cast<std::size_t>(i)].tokens);
  }
  // dimension mismatch must be rejected
  CHECK_THROWS_AS(Dataset::load(path, make_ps(8)), IoError);
  std::filesystem::remove(path);
}
