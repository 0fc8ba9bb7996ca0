#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "moe/error.hpp"
#include "moe/forward.hpp"
#include "oracles.hpp"

using namespace moe;

TEST_CASE("token with no retained routed expert outputs zero") {
  auto ps = std::make_shared<const PatternSet>(build_pattern_set(8, PatternMode::StandardBasis, 0));
  Philox rng(2, 0);
  MoELayer layer = make_analyzed_layer(2, 3, 8, 1);
  init_gaussian(layer, 0.5, 0.5, rng);
  const Sample s = sample_input(ps, 4, +1, rng);
  const RoutingConfig cfg{RoutingMode::ExpertChoice, 2};
  const PruneMask only1 = PruneMask::from_retained(2, {0});
  const GatingOutput gating = compute_gating(layer, s, cfg, only1);
  const Mat out = expert_forward(layer, s, gating, only1);
  const auto mass = gating.token_mass();
  for (int j = 0; j < 4; ++j)
    if (mass[static_cast<std::size_t>(j)] == 0.0) CHECK(out(j, 0) == 0.0);
}

TEST_CASE("single expert, unit gate, aligned column") {
  // one expert, m=1, W1 column = x, W2 = ones row: output = ||x||^2 * G = 1
  auto ps = std::make_shared<const PatternSet>(build_pattern_set(5, PatternMode::StandardBasis, 0));
  MoELayer layer = make_general_layer(1, 1, 5, 1);
  Philox rng(0, 0);
  const Sample s = sample_input(ps, 1, +1, rng);
  for (int t = 0; t < 5; ++t)
    layer.hidden[0][static_cast<std::size_t>(t)] = ps->pattern(0)[static_cast<std::size_t>(t)];
  layer.w2[0][0] = 1.0;
  const RoutingConfig cfg{RoutingMode::ExpertChoice, 1};
  const PruneMask full = PruneMask::full(1);
  const GatingOutput gating = compute_gating(layer, s, cfg, full);
  REQUIRE(gating.gates.size() == 1);
  CHECK(gating.gates[0].value == 1.0);
  const Mat out = expert_forward(layer, s, gating, full);
  CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("random instances match the dense oracle within 1e-12") {
  Philox rng(6, 0);
  for (int trial = 0; trial < 30; ++trial) {
    auto ps = std::make_shared<const PatternSet>(build_pattern_set(
        6, trial % 2 ? PatternMode::StandardBasis : PatternMode::RandomOrthonormal, trial));
    MoELayer layer = make_general_layer(2, 4, 6, 3);
    init_gaussian(layer, 0.6, 0.6, rng);
    const Sample s = sample_input(ps, 3, trial % 2 ? +1 : -1, rng);
    for (RoutingMode mode : {RoutingMode::TokenChoice, RoutingMode::ExpertChoice}) {
      const RoutingConfig cfg{mode, 2};
      const PruneMask full = PruneMask::full(2);
      const GatingOutput gating = compute_gating(layer, s, cfg, full);
      const Mat out = expert_forward(layer, s, gating, full);
      const auto expect = oracle::dense_forward(layer, s, oracle::dense_gates(gating));
      for (int j = 0; j < 3; ++j)
        for (int o = 0; o < 3; ++o)
          CHECK(std::abs(out(j, o) - expect[static_cast<std::size_t>(j)][static_cast<std::size_t>(o)]) <
                1e-12);
    }
  }
}

TEST_CASE("classify: zero hidden weights give f = 0") {
  auto ps = std::make_shared<const PatternSet>(build_pattern_set(8, PatternMode::StandardBasis, 0));
  MoELayer layer = make_analyzed_layer(3, 2, 8, 2);
  Philox rng(1, 0);
  for (Vec& r : layer.routers)
    for (double& x : r) x = rng.next_gaussian();
  const Sample s = sample_input(ps, 4, -1, rng);
  CHECK(classify(layer, s, RoutingConfig{RoutingMode::ExpertChoice, 2}, PruneMask::full(3)) == 0.0);
}

TEST_CASE("classify: hand-built single-expert construction") {
  // one positive expert with router 10*o1 and one neuron o1, expert-choice l=1:
  // on a class-1 sample the expert selects o1 with gate 1, sigma = 1 -> f = 1
  auto ps = std::make_shared<const PatternSet>(build_pattern_set(8, PatternMode::StandardBasis, 0));
  MoELayer layer = make_analyzed_layer(2, 1, 8, 1);
  ps->add_scaled(layer.routers[0], ps->task1_index(), 10.0);
  ps->add_scaled(layer.neuron(0, 0), ps->task1_index(), 1.0);
  Philox rng(3, 0);
  const Sample s = sample_input(ps, 4, +1, rng);
  const double f = classify(layer, s, RoutingConfig{RoutingMode::ExpertChoice, 1}, PruneMask::full(2));
  CHECK(f == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("classify equals expert_forward summed over tokens") {
  Philox rng(12, 0);
  for (int trial = 0; trial < 40; ++trial) {
    for (RoutingMode mode : {RoutingMode::TokenChoice, RoutingMode::ExpertChoice}) {
      const oracle::Instance inst = oracle::random_instance(rng, mode, /*partial_mask=*/true);
      const GatingOutput gating = compute_gating(inst.layer, inst.sample, inst.cfg, inst.mask);
      const Mat out = expert_forward(inst.layer, inst.sample, gating, inst.mask);
      double sum = 0.0;
      for (int j = 0; j < inst.sample.n(); ++j) sum += out(j, 0);
      const double f = classify(inst.layer, inst.sample, gating);
      CHECK(std::abs(f - sum) < 1e-12);
    }
  }
}

TEST_CASE("classify rejects general-head layers; forward rejects foreign gating") {
  auto ps = std::make_shared<const PatternSet>(build_pattern_set(6, PatternMode::StandardBasis, 0));
  MoELayer general = make_general_layer(2, 2, 6, 2);
  Philox rng(0, 0);
  const Sample s = sample_input(ps, 3, +1, rng);
  CHECK_THROWS_AS(classify(general, s, RoutingConfig{RoutingMode::ExpertChoice, 1}, PruneMask::full(2)),
                  ContractError);

  MoELayer layer = make_analyzed_layer(3, 2, 6, 1);
  const GatingOutput gating =
      compute_gating(layer, s, RoutingConfig{RoutingMode::ExpertChoice, 1}, PruneMask::full(3));
  CHECK_THROWS_AS(expert_forward(general, s, gating, PruneMask::full(2)), ContractError);
}

TEST_CASE("permutation equivariance: shuffling experts leaves f unchanged") {
  Philox rng(19, 0);
  for (int trial = 0; trial < 25; ++trial) {
    for (RoutingMode mode : {RoutingMode::TokenChoice, RoutingMode::ExpertChoice}) {
      const oracle::Instance inst = oracle::random_instance(rng, mode);
      const double f = classify(inst.layer, inst.sample, inst.cfg, inst.mask);

      // rotate expert indices by one
      MoELayer rotated = inst.layer;
      const int k = inst.layer.k;
      for (int s = 0; s < k; ++s) {
        const int from = (s + 1) % k;
        rotated.routers[static_cast<std::size_t>(s)] =
            inst.layer.routers[static_cast<std::size_t>(from)];
        rotated.hidden[static_cast<std::size_t>(s)] =
            inst.layer.hidden[static_cast<std::size_t>(from)];
        rotated.heads[static_cast<std::size_t>(s)] =
            inst.layer.heads[static_cast<std::size_t>(from)];
      }
      const double g = classify(rotated, inst.sample, inst.cfg, inst.mask);
      CHECK(std::abs(f - g) < 1e-12);
    }
  }
}
