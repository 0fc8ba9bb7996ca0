#include "moe/layer.hpp"

#include <cmath>
#include <numeric>

#include "moe/binio.hpp"
#include "moe/error.hpp"

namespace moe {

std::vector<int> MoELayer::sign_groups() const {
  if (!analyzed) throw ContractError("sign groups are defined for analyzed layers only");
  std::vector<int> g(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) g[s] = heads[s] > 0 ? 0 : 1;
  return g;
}

void MoELayer::validate() const {
  if (k < 1 || m < 1 || d < 1 || d_out < 1) throw ConfigError("layer dimensions must be positive");
  if (static_cast<int>(routers.size()) != k) throw ConfigError("router count mismatch");
  if (static_cast<int>(hidden.size()) != k) throw ConfigError("hidden block count mismatch");
  auto check_finite = [](std::span<const double> v) {
    for (double x : v)
      if (!std::isfinite(x)) throw NumericError("non-finite weight in layer");
  };
  for (const Vec& r : routers) {
    if (static_cast<int>(r.size()) != d) throw ConfigError("router dimension mismatch");
    check_finite(r);
  }
  for (const Vec& h : hidden) {
    if (static_cast<int>(h.size()) != static_cast<int>(m) * d)
      throw ConfigError("hidden block size mismatch");
    check_finite(h);
  }
  if (analyzed) {
    if (d_out != 1) throw ConfigError("analyzed layers have d_out = 1");
    if (static_cast<int>(heads.size()) != k) throw ConfigError("head count mismatch");
    int pos = 0, neg = 0;
    for (double a : heads) {
      if (a == 1.0)
        ++pos;
      else if (a == -1.0)
        ++neg;
      else
        throw ConfigError("analyzed heads must be +1 or -1");
    }
    if (pos == 0 || neg == 0) throw ConfigError("both sign groups must be non-empty");
  } else {
    if (static_cast<int>(w2.size()) != k) throw ConfigError("w2 block count mismatch");
    for (const Vec& w : w2) {
      if (static_cast<int>(w.size()) != d_out * m) throw ConfigError("w2 block size mismatch");
      check_finite(w);
    }
  }
}

MoELayer make_analyzed_layer(int k, int m, int d, int positive) {
  if (positive < 1 || positive >= k)
    throw ConfigError("analyzed layer needs 1 <= positive < k experts with head +1");
  MoELayer layer;
  layer.k = k;
  layer.m = m;
  layer.d = d;
  layer.d_out = 1;
  layer.analyzed = true;
  layer.routers.assign(static_cast<std::size_t>(k), Vec(static_cast<std::size_t>(d), 0.0));
  layer.hidden.assign(static_cast<std::size_t>(k),
                      Vec(static_cast<std::size_t>(m) * d, 0.0));
  layer.heads.assign(static_cast<std::size_t>(k), -1.0);
  for (int s = 0; s < positive; ++s) layer.heads[s] = +1.0;
  return layer;
}

MoELayer make_general_layer(int k, int m, int d, int d_out) {
  MoELayer layer;
  layer.k = k;
  layer.m = m;
  layer.d = d;
  layer.d_out = d_out;
  layer.analyzed = false;
  layer.routers.assign(static_cast<std::size_t>(k), Vec(static_cast<std::size_t>(d), 0.0));
  layer.hidden.assign(static_cast<std::size_t>(k),
                      Vec(static_cast<std::size_t>(m) * d, 0.0));
  layer.w2.assign(static_cast<std::size_t>(k),
                  Vec(static_cast<std::size_t>(d_out) * m, 0.0));
  return layer;
}

void init_gaussian(MoELayer& layer, double router_std, double neuron_std, Philox& rng) {
  for (Vec& r : layer.routers)
    for (double& x : r) x = rng.next_gaussian(router_std);
  for (Vec& h : layer.hidden)
    for (double& x : h) x = rng.next_gaussian(neuron_std);
  if (!layer.analyzed)
    for (Vec& w : layer.w2)
      for (double& x : w) x = rng.next_gaussian(neuron_std);
}

PruneMask PruneMask::full(int k) {
  PruneMask m;
  m.k = k;
  m.keep.assign(static_cast<std::size_t>(k), 1);
  return m;
}

PruneMask PruneMask::from_retained(int k, const std::vector<int>& retained) {
  PruneMask m;
  m.k = k;
  m.keep.assign(static_cast<std::size_t>(k), 0);
  for (int s : retained) {
    if (s < 0 || s >= k) throw ConfigError("retained expert index out of range");
    m.keep[static_cast<std::size_t>(s)] = 1;
  }
  m.validate();
  return m;
}

int PruneMask::retained_count() const {
  return static_cast<int>(std::count(keep.begin(), keep.end(), 1));
}

std::vector<int> PruneMask::retained_indices() const {
  std::vector<int> idx;
  for (int s = 0; s < k; ++s)
    if (keep[static_cast<std::size_t>(s)]) idx.push_back(s);
  return idx;
}

void PruneMask::validate() const {
  if (k < 1 || static_cast<int>(keep.size()) != k) throw ConfigError("malformed prune mask");
  if (retained_count() == 0) throw ConfigError("prune mask must retain at least one expert");
}

namespace {
constexpr std::uint32_t kModeGeneral = 0;
constexpr std::uint32_t kModeAnalyzed = 1;
}  // namespace

void MoELayer::save(const std::filesystem::path& path) const {
  validate();
  auto out = open_output(path);
  binio::put_magic(out, "MOEL1");
  binio::put_u32(out, analyzed ? kModeAnalyzed : kModeGeneral);
  binio::put_u32(out, static_cast<std::uint32_t>(k));
  binio::put_u32(out, static_cast<std::uint32_t>(m));
  binio::put_u32(out, static_cast<std::uint32_t>(d));
  binio::put_u32(out, static_cast<std::uint32_t>(d_out));
  for (const Vec& r : routers)
    for (double x : r) binio::put_f64(out, x);
  for (const Vec& h : hidden)
    for (double x : h) binio::put_f64(out, x);
  if (analyzed) {
    for (double a : heads) binio::put_f64(out, a);
  } else {
    for (const Vec& w : w2)
      for (double x : w) binio::put_f64(out, x);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

MoELayer MoELayer::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string what = path.string();
  binio::expect_magic(in, "MOEL1", what);
  const std::uint32_t mode = binio::get_u32(in, what);
  if (mode > 1) throw IoError("unknown layer mode tag in " + what);

  MoELayer layer;
  layer.analyzed = mode == kModeAnalyzed;
  layer.k = static_cast<int>(binio::get_u32(in, what));
  layer.m = static_cast<int>(binio::get_u32(in, what));
  layer.d = static_cast<int>(binio::get_u32(in, what));
  layer.d_out = static_cast<int>(binio::get_u32(in, what));
  if (layer.k < 1 || layer.m < 1 || layer.d < 1 || layer.d_out < 1)
    throw IoError("bad layer header in " + what);

  layer.routers.assign(static_cast<std::size_t>(layer.k), Vec(static_cast<std::size_t>(layer.d)));
  for (Vec& r : layer.routers)
    for (double& x : r) x = binio::get_f64(in, what);
  layer.hidden.assign(static_cast<std::size_t>(layer.k),
                      Vec(static_cast<std::size_t>(layer.m) * layer.d));
  for (Vec& h : layer.hidden)
    for (double& x : h) x = binio::get_f64(in, what);
  if (layer.analyzed) {
    layer.heads.resize(static_cast<std::size_t>(layer.k));
    for (double& a : layer.heads) a = binio::get_f64(in, what);
  } else {
    layer.w2.assign(static_cast<std::size_t>(layer.k),
                    Vec(static_cast<std::size_t>(layer.d_out) * layer.m));
    for (Vec& w : layer.w2)
      for (double& x : w) x = binio::get_f64(in, what);
  }
  layer.validate();
  return layer;
}

}  // namespace moe
