#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <fstream>

#include "moe/error.hpp"
#include "moe/manifest.hpp"
#include "moe/pipeline.hpp"

using namespace moe;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("moeprune_manifest_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

void write_doubles(const std::filesystem::path& p, const std::vector<double>& v,
                   std::size_t pad_before = 0) {
  std::ofstream out(p, std::ios::binary);
  for (std::size_t i = 0; i < pad_before; ++i) out.put('\0');
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

TensorRef ref(const std::string& path, int dim, std::uint64_t offset = 0) {
  TensorRef r;
  r.path = path;
  r.offset = offset;
  r.dim = dim;
  r.length = static_cast<std::uint64_t>(dim);
  return r;
}

}  // namespace

TEST_CASE("hand-built manifest: 3-4-5 routers and a frozen one") {
  TempDir tmp;
  write_doubles(tmp.path / "pre.bin", {3.0, 4.0, 1.0, 0.0});   // two routers of dim 2
  write_doubles(tmp.path / "post.bin", {6.0, 8.0, 1.0, 0.0});

  CheckpointManifest m;
  m.base_dir = tmp.path;
  LayerCheckpoint layer;
  layer.name = "enc1";
  layer.experts.push_back({ref("pre.bin", 2, 0), ref("post.bin", 2, 0), {}, {}});
  layer.experts.push_back({ref("pre.bin", 2, 16), ref("post.bin", 2, 16), {}, {}});
  m.layers.push_back(layer);

  const auto tables = score_checkpoints(m, 0.5);
  REQUIRE(tables.size() == 1);
  CHECK(tables[0].delta[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(tables[0].delta[1] == 0.0);
  CHECK(tables[0].plan.retained.retained_indices() == std::vector<int>{0});
  CHECK_FALSE(tables[0].has_neurons);
}

TEST_CASE("identical pre/post tensors give zero deltas and index ranking") {
  TempDir tmp;
  write_doubles(tmp.path / "w.bin", {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  CheckpointManifest m;
  m.base_dir = tmp.path;
  LayerCheckpoint layer;
  layer.name = "enc";
  for (int s = 0; s < 3; ++s)
    layer.experts.push_back(
        {ref("w.bin", 2, static_cast<std::uint64_t>(16 * s)),
         ref("w.bin", 2, static_cast<std::uint64_t>(16 * s)), {}, {}});
  m.layers.push_back(layer);
  const auto tables = score_checkpoints(m, 0.5);
  for (double d : tables[0].delta) CHECK(d == 0.0);
  CHECK(tables[0].plan.retained.retained_indices() == std::vector<int>{0});  // tie -> low index
}

TEST_CASE("round-trip: trained layer pair scores identically to memory") {
  // serialize a small trained synthetic pair into raw tensors + manifest and
  // compare against the in-memory criterion
  TempDir tmp;
  ExperimentConfig cfg;
  cfg.d = 24;
  cfg.n = 12;
  cfg.k = 4;
  cfg.m = 3;
  cfg.l = 2;
  cfg.positive_experts = 2;
  cfg.train.steps = 40;
  cfg.train.batch_size = 8;
  cfg.train.eta_e = 0.05;
  cfg.train.eta_r = 0.02;
  cfg.eval_samples = 10;
  cfg.proficiency_samples = 10;
  cfg.seed = 5;
  const PipelineResult res = run_full_pipeline(cfg);
  const std::vector<double> mem = router_norm_change(res.layer0, res.layerT);

  CheckpointManifest m;
  LayerCheckpoint layer;
  layer.name = "synthetic";
  for (int s = 0; s < cfg.k; ++s) {
    const auto pre_name = "pre_" + std::to_string(s) + ".bin";
    const auto post_name = "post_" + std::to_string(s) + ".bin";
    write_doubles(tmp.path / pre_name, res.layer0.routers[static_cast<std::size_t>(s)]);
    write_doubles(tmp.path / post_name, res.layerT.routers[static_cast<std::size_t>(s)]);
    ExpertCheckpoint e;
    e.pre = ref(pre_name, cfg.d);
    e.post = ref(post_name, cfg.d);
    for (int r = 0; r < cfg.m; ++r) {
      const auto pn = "pre_n" + std::to_string(s) + "_" + std::to_string(r) + ".bin";
      const auto qn = "post_n" + std::to_string(s) + "_" + std::to_string(r) + ".bin";
      const auto span0 = res.layer0.neuron(s, r);
      const auto spanT = res.layerT.neuron(s, r);
      write_doubles(tmp.path / pn, Vec(span0.begin(), span0.end()));
      write_doubles(tmp.path / qn, Vec(spanT.begin(), spanT.end()));
      e.pre_neurons.push_back(ref(pn, cfg.d));
      e.post_neurons.push_back(ref(qn, cfg.d));
    }
    layer.experts.push_back(std::move(e));
  }
  m.layers.push_back(std::move(layer));

  // exercise the JSON writer/reader too
  const auto mpath = tmp.path / "manifest.json";
  m.save(mpath);
  const CheckpointManifest loaded = CheckpointManifest::load(mpath);

  const auto tables = score_checkpoints(loaded, 0.25);
  REQUIRE(tables.size() == 1);
  REQUIRE(static_cast<int>(tables[0].delta.size()) == cfg.k);
  for (int s = 0; s < cfg.k; ++s)
    CHECK(std::abs(tables[0].delta[static_cast<std::size_t>(s)] -
                   mem[static_cast<std::size_t>(s)]) < 1e-12);
  CHECK(tables[0].has_neurons);

  // neuron baselines must match the in-memory computation
  Philox rng(1, 0);
  auto ps = std::make_shared<const PatternSet>(
      build_pattern_set(cfg.d, PatternMode::StandardBasis, cfg.seed));
  const Dataset ds = sample_dataset(ps, cfg.n, 4, true, rng);
  const BaselineScores mem_scores =
      baseline_scores(res.layer0, res.layerT, ds, RoutingConfig{RoutingMode::ExpertChoice, cfg.l});
  for (int s = 0; s < cfg.k; ++s) {
    CHECK(std::abs(tables[0].avg_neuron_magnitude[static_cast<std::size_t>(s)] -
                   mem_scores.avg_neuron_magnitude[static_cast<std::size_t>(s)]) < 1e-12);
    CHECK(std::abs(tables[0].avg_change_neuron_magnitude[static_cast<std::size_t>(s)] -
                   mem_scores.avg_change_neuron_magnitude[static_cast<std::size_t>(s)]) < 1e-12);
  }
}

TEST_CASE("malformed manifests: missing file, short tensor, dim mismatch") {
  TempDir tmp;
  write_doubles(tmp.path / "ok.bin", {1.0, 2.0});

  CheckpointManifest missing;
  missing.base_dir = tmp.path;
  missing.layers.push_back({"l", {{ref("absent.bin", 2), ref("ok.bin", 2), {}, {}}}});
  CHECK_THROWS_AS(score_checkpoints(missing, 0.0), IoError);

  CheckpointManifest short_read;
  short_read.base_dir = tmp.path;
  short_read.layers.push_back({"l", {{ref("ok.bin", 4), ref("ok.bin", 4), {}, {}}}});
  CHECK_THROWS_AS(score_checkpoints(short_read, 0.0), IoError);

  // dim mismatch caught at load time from JSON
  const auto bad = tmp.path / "bad.json";
  {
    std::ofstream out(bad);
    out << R"({"layers":[{"name":"l","experts":[{"pre":{"path":"ok.bin","dim":2},)"
        << R"("post":{"path":"ok.bin","dim":3}}]}]})";
  }
  CHECK_THROWS_AS(CheckpointManifest::load(bad), ManifestError);

  // length != dim
  const auto bad2 = tmp.path / "bad2.json";
  {
    std::ofstream out(bad2);
    out << R"({"layers":[{"name":"l","experts":[{"pre":{"path":"ok.bin","dim":2,"length":5},)"
        << R"("post":{"path":"ok.bin","dim":2}}]}]})";
  }
  CHECK_THROWS_AS(CheckpointManifest::load(bad2), ManifestError);

  const auto bad3 = tmp.path / "bad3.json";
  {
    std::ofstream out(bad3);
    out << "{ not json";
  }
  CHECK_THROWS_AS(CheckpointManifest::load(bad3), ManifestError);
}
