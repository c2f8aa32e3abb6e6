#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "bsattn/sim/config.hpp"
#include "bsattn/synthetic.hpp"

namespace bsattn {

struct TensorPaths {
  std::filesystem::path q;
  std::filesystem::path k;
  std::filesystem::path v;
};

/// Synthetic input: the key-side spec plus query count and shape. The spec's
/// seed is always the manifest seed.
struct SyntheticInput {
  SyntheticSpec spec;
  std::size_t num_queries = 8;
  QueryShape query;
};

/// One experiment: where the inputs come from, which machine runs them and
/// where results go. Exactly one of `tensors` / `synthetic` is set.
struct RunManifest {
  int schema_version = 1;
  std::optional<std::filesystem::path> config;  // defaults when absent
  std::optional<TensorPaths> tensors;
  std::optional<SyntheticInput> synthetic;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  std::optional<sim::SimMode> mode;  // overrides the config's mode

  /// Throws sim::ConfigError when both or neither input kinds are present.
  void validate() const;
};

/// Relative paths resolve against `base_dir`. Unknown fields throw
/// sim::ConfigError.
RunManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunManifest load_manifest(const std::filesystem::path& path);
nlohmann::json to_json(const RunManifest& m);

/// Loads the config (or defaults) and applies the mode override.
sim::SimConfig resolve_config(const RunManifest& m);

/// Q, K and V for the manifest: read from BSTR files or generated.
Workload load_workload(const RunManifest& m);

}  // namespace bsattn
