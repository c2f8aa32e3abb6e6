#include "bsattn/manifest.hpp"

#include <fstream>

#include "bsattn/bstr_io.hpp"
#include "bsattn/report_io.hpp"

namespace bsattn {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const json& v, const std::filesystem::path& base, const char* what) {
  if (!v.is_string()) throw sim::ConfigError(std::string("manifest.") + what + ": expected a path string");
  std::filesystem::path p = v.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

}  // namespace

void RunManifest::validate() const {
  if (schema_version != 1) {
    throw sim::ConfigError("manifest schema_version " + std::to_string(schema_version) +
                           " is not supported (expected 1)");
  }
  if (tensors.has_value() == synthetic.has_value()) {
    throw sim::ConfigError("manifest needs exactly one of 'tensors' or 'synthetic'");
  }
  if (synthetic && synthetic->num_queries == 0) {
    throw sim::ConfigError("manifest.synthetic.num_queries must be >= 1");
  }
}

RunManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw sim::ConfigError("manifest: expected a JSON object");
  static const char* const kKnown[] = {"schema_version", "config", "tensors", "synthetic",
                                       "out_dir",        "seed",   "mode"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw sim::ConfigError("manifest: unknown field '" + key + "'");
    }
  }
  RunManifest m;
  try {
    if (j.contains("schema_version")) m.schema_version = j.at("schema_version").get<int>();
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) throw sim::ConfigError("manifest.seed: expected a non-negative integer");
      m.seed = j.at("seed").get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    throw sim::ConfigError(std::string("manifest: ") + e.what());
  }
  if (j.contains("config")) m.config = resolve(j.at("config"), base_dir, "config");
  if (j.contains("out_dir")) m.out_dir = resolve(j.at("out_dir"), base_dir, "out_dir");
  if (j.contains("mode")) {
    const auto& v = j.at("mode");
    const auto mode = v.is_string() ? sim::parse_sim_mode(v.get<std::string>()) : std::nullopt;
    if (!mode) throw sim::ConfigError("manifest.mode: expected dense, besf_sync or besf_bap");
    m.mode = mode;
  }
  if (j.contains("tensors")) {
    const auto& t = j.at("tensors");
    if (!t.is_object() || t.size() != 3 || !t.contains("q") || !t.contains("k") || !t.contains("v")) {
      throw sim::ConfigError("manifest.tensors: expected exactly {q, k, v}");
    }
    m.tensors = TensorPaths{resolve(t.at("q"), base_dir, "tensors.q"),
                            resolve(t.at("k"), base_dir, "tensors.k"),
                            resolve(t.at("v"), base_dir, "tensors.v")};
  }
  if (j.contains("synthetic")) {
    json s = j.at("synthetic");
    if (!s.is_object()) throw sim::ConfigError("manifest.synthetic: expected an object");
    if (s.contains("seed")) {
      throw sim::ConfigError("manifest.synthetic.seed: the seed lives at the manifest top level");
    }
    SyntheticInput in;
    try {
      if (s.contains("num_queries")) {
        if (!s.at("num_queries").is_number_unsigned()) {
          throw sim::ConfigError("manifest.synthetic.num_queries: expected a positive integer");
        }
        in.num_queries = s.at("num_queries").get<std::size_t>();
        s.erase("num_queries");
      }
      if (s.contains("query")) {
        const auto& q = s.at("query");
        if (!q.is_object()) throw sim::ConfigError("manifest.synthetic.query: expected an object");
        for (const auto& [key, _] : q.items()) {
          if (key != "gain" && key != "noise") {
            throw sim::ConfigError("manifest.synthetic.query: unknown field '" + key + "'");
          }
        }
        if (q.contains("gain")) in.query.gain = q.at("gain").get<double>();
        if (q.contains("noise")) in.query.noise = q.at("noise").get<double>();
        if (!(in.query.gain >= 0.0) || !(in.query.noise >= 0.0)) {
          throw sim::ConfigError("manifest.synthetic.query: gain and noise must be >= 0");
        }
        s.erase("query");
      }
    } catch (const json::exception& e) {
      throw sim::ConfigError(std::string("manifest.synthetic: ") + e.what());
    }
    s["seed"] = m.seed;
    in.spec = synthetic_spec_from_json(s);
    m.synthetic = in;
  }
  m.validate();
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw sim::ConfigError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw sim::ConfigError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

json to_json(const RunManifest& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["seed"] = m.seed;
  if (m.mode) j["mode"] = sim::to_string(*m.mode);
  if (m.tensors) {
    j["tensors"] = {{"q", m.tensors->q.string()}, {"k", m.tensors->k.string()}, {"v", m.tensors->v.string()}};
  }
  if (m.synthetic) {
    auto s = to_json(m.synthetic->spec);
    s.erase("seed");
    s["num_queries"] = m.synthetic->num_queries;
    s["query"] = {{"gain", m.synthetic->query.gain}, {"noise", m.synthetic->query.noise}};
    j["synthetic"] = s;
  }
  return j;
}

sim::SimConfig resolve_config(const RunManifest& m) {
  sim::SimConfig cfg = m.config ? load_sim_config(*m.config) : sim::SimConfig{};
  if (m.mode) cfg.mode = *m.mode;
  cfg.validate();
  return cfg;
}

Workload load_workload(const RunManifest& m) {
  m.validate();
  if (m.tensors) {
    Workload w{load_tensor(m.tensors->q), load_tensor(m.tensors->k), load_tensor(m.tensors->v)};
    check_attention_shapes(w.q, w.k, w.v);
    return w;
  }
  return gen_workload(m.synthetic->spec, m.synthetic->num_queries, m.synthetic->query);
}

}  // namespace bsattn
