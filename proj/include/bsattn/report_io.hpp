#pragma once

// JSON (de)serialization for configs, stats, traces and violation reports.

#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bsattn/besf.hpp"
#include "bsattn/oracle.hpp"
#include "bsattn/sim/config.hpp"
#include "bsattn/sim/simulator.hpp"
#include "bsattn/synthetic.hpp"

namespace bsattn {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const PruneConfig& c);
nlohmann::json to_json(const sim::SimConfig& c);
nlohmann::json to_json(const sim::SimStats& s, double clock_ghz);
nlohmann::json to_json(const oracle::ViolationReport& r);
nlohmann::json to_json(const TraceEvent& e);
nlohmann::json to_json(const SyntheticSpec& s);

/// Missing fields keep their defaults; unknown fields throw sim::ConfigError.
PruneConfig prune_config_from_json(const nlohmann::json& j);
sim::SimConfig sim_config_from_json(const nlohmann::json& j);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

sim::SimConfig load_sim_config(const std::filesystem::path& path);

/// One JSON object per line per event.
void write_trace_jsonl(std::ostream& os, const std::vector<PruneTrace>& traces);

/// Rebuilds traces (events only) from JSON lines; throws ParseError on any
/// malformed line. `num_keys` and `bits` are taken from the caller.
std::vector<PruneTrace> read_trace_jsonl(std::istream& is, std::size_t num_keys, int bits);

/// Deterministic text form: two-space indent, trailing newline.
std::string dump(const nlohmann::json& j);

}  // namespace bsattn
