#include "moe/manifest.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "moe/binio.hpp"
#include "moe/error.hpp"

namespace moe {

using nlohmann::json;

namespace {

TensorRef ref_from_json(const json& j, const std::string& where) {
  TensorRef r;
  if (!j.contains("path")) throw ManifestError("tensor reference without path in " + where);
  r.path = j.at("path").get<std::string>();
  r.offset = j.value("offset", 0ull);
  r.dim = j.value("dim", 0);
  r.length = j.value("length", static_cast<std::uint64_t>(r.dim));
  if (r.dim <= 0) throw ManifestError("tensor reference without positive dim in " + where);
  if (r.length != static_cast<std::uint64_t>(r.dim))
    throw ManifestError("tensor length " + std::to_string(r.length) + " != dim " +
                        std::to_string(r.dim) + " in " + where);
  return r;
}

json ref_to_json(const TensorRef& r) {
  return json{{"path", r.path}, {"offset", r.offset}, {"length", r.length}, {"dim", r.dim}};
}

}  // namespace

CheckpointManifest CheckpointManifest::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ManifestError("cannot parse manifest " + path.string() + ": " + e.what());
  }
  CheckpointManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  if (!j.contains("layers") || !j.at("layers").is_array())
    throw ManifestError("manifest has no layers array: " + path.string());
  for (const json& jl : j.at("layers")) {
    LayerCheckpoint layer;
    layer.name = jl.value("name", "layer" + std::to_string(m.layers.size()));
    if (!jl.contains("experts") || !jl.at("experts").is_array() || jl.at("experts").empty())
      throw ManifestError("layer " + layer.name + " has no experts");
    for (const json& je : jl.at("experts")) {
      ExpertCheckpoint e;
      const std::string where = layer.name + "/expert" + std::to_string(layer.experts.size());
      if (!je.contains("pre") || !je.contains("post"))
        throw ManifestError(where + " needs pre and post router references");
      e.pre = ref_from_json(je.at("pre"), where + "/pre");
      e.post = ref_from_json(je.at("post"), where + "/post");
      if (e.pre.dim != e.post.dim)
        throw ManifestError(where + ": pre dim " + std::to_string(e.pre.dim) +
                            " != post dim " + std::to_string(e.post.dim));
      if (je.contains("pre_neurons") != je.contains("post_neurons"))
        throw ManifestError(where + ": neuron tensors must be given for both states or neither");
      if (je.contains("pre_neurons")) {
        for (const json& jn : je.at("pre_neurons"))
          e.pre_neurons.push_back(ref_from_json(jn, where + "/pre_neurons"));
        for (const json& jn : je.at("post_neurons"))
          e.post_neurons.push_back(ref_from_json(jn, where + "/post_neurons"));
        if (e.pre_neurons.size() != e.post_neurons.size())
          throw ManifestError(where + ": pre/post neuron counts differ");
      }
      layer.experts.push_back(std::move(e));
    }
    m.layers.push_back(std::move(layer));
  }
  if (m.layers.empty()) throw ManifestError("manifest has no layers: " + path.string());
  return m;
}

void CheckpointManifest::save(const std::filesystem::path& path) const {
  json j;
  j["layers"] = json::array();
  for (const LayerCheckpoint& layer : layers) {
    json jl;
    jl["name"] = layer.name;
    jl["experts"] = json::array();
    for (const ExpertCheckpoint& e : layer.experts) {
      json je;
      je["pre"] = ref_to_json(e.pre);
      je["post"] = ref_to_json(e.post);
      if (!e.pre_neurons.empty()) {
        je["pre_neurons"] = json::array();
        je["post_neurons"] = json::array();
        for (const TensorRef& r : e.pre_neurons) je["pre_neurons"].push_back(ref_to_json(r));
        for (const TensorRef& r : e.post_neurons) je["post_neurons"].push_back(ref_to_json(r));
      }
      jl["experts"].push_back(std::move(je));
    }
    j["layers"].push_back(std::move(jl));
  }
  auto out = open_output(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

Vec read_tensor(const TensorRef& ref, const std::filesystem::path& base_dir) {
  std::filesystem::path p(ref.path);
  if (p.is_relative()) p = base_dir / p;
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file " + p.string() + " (reference: " + ref.path + ")");
  in.seekg(static_cast<std::streamoff>(ref.offset));
  if (!in) throw IoError("cannot seek to offset " + std::to_string(ref.offset) + " in " + p.string());
  Vec v(static_cast<std::size_t>(ref.length));
  for (double& x : v) {
    x = [&] {
      try {
        return binio::get_f64(in, p.string());
      } catch (const IoError&) {
        throw IoError("short tensor read in " + p.string() + " at offset " +
                      std::to_string(ref.offset) + " (need " + std::to_string(ref.length) +
                      " doubles)");
      }
    }();
  }
  return v;
}

std::vector<LayerScoreTable> score_checkpoints(const CheckpointManifest& manifest, double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("infeasible pruning ratio: rho must lie in [0, 1)");
  std::vector<LayerScoreTable> tables;
  for (const LayerCheckpoint& layer : manifest.layers) {
    LayerScoreTable t;
    t.name = layer.name;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.has_neurons = !layer.experts.empty() && !layer.experts.front().pre_neurons.empty();
    for (const ExpertCheckpoint& e : layer.experts) {
      const Vec pre = read_tensor(e.pre, manifest.base_dir);
      const Vec post = read_tensor(e.post, manifest.base_dir);
      t.delta.push_back(l2_norm(post) - l2_norm(pre));
      t.router_magnitude.push_back(l2_norm(post));
      if (e.pre_neurons.empty() || !t.has_neurons) {
        t.avg_neuron_magnitude.push_back(nan);
        t.avg_change_neuron_magnitude.push_back(nan);
        t.has_neurons = false;
        continue;
      }
      double mag = 0.0, change = 0.0;
      for (std::size_t r = 0; r < e.post_neurons.size(); ++r) {
        const Vec nt = read_tensor(e.post_neurons[r], manifest.base_dir);
        const Vec n0 = read_tensor(e.pre_neurons[r], manifest.base_dir);
        mag += l2_norm(nt);
        change += l2_norm(nt) - l2_norm(n0);
      }
      t.avg_neuron_magnitude.push_back(mag / static_cast<double>(e.post_neurons.size()));
      t.avg_change_neuron_magnitude.push_back(change / static_cast<double>(e.post_neurons.size()));
    }
    t.plan = select_retained(t.delta, rho, Grouping::WholeLayer, {});
    tables.push_back(std::move(t));
  }
  return tables;
}

void LayerScoreTable::save_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  out << "expert_id,delta,router_magnitude,avg_neuron_magnitude,avg_change_neuron_magnitude,"
         "retained\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  for (std::size_t s = 0; s < delta.size(); ++s)
    out << (s + 1) << ',' << fmt_double(delta[s]) << ',' << fmt_double(router_magnitude[s]) << ','
        << cell(avg_neuron_magnitude[s]) << ',' << cell(avg_change_neuron_magnitude[s]) << ','
        << (plan.retained.retains(static_cast<int>(s)) ? 1 : 0) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace moe
