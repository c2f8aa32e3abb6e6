#include "bsattn/report_io.hpp"

#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>

namespace bsattn {
namespace {

using nlohmann::json;

// Rejects keys outside `allowed` so typos in config files fail loudly.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw sim::ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw sim::ConfigError(where + ": unknown field '" + key + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw sim::ConfigError(where + "." + key + ": " + e.what());
  }
}

// Non-negative integers arrive as json unsigned or as a non-negative signed.
void read_size(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw sim::ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

const char* keep_rule_name(KeepRule r) { return r == KeepRule::kGte ? "gte" : "strict"; }
const char* units_name(RadiusUnits u) { return u == RadiusUnits::kLogit ? "logit" : "integer"; }

}  // namespace

json to_json(const PruneConfig& c) {
  return json{{"alpha", c.alpha},
              {"radius", c.radius},
              {"prune_enabled", c.prune_enabled},
              {"keep_rule", keep_rule_name(c.keep_rule)},
              {"radius_units", units_name(c.radius_units)}};
}

json to_json(const sim::SimConfig& c) {
  return json{{"num_lanes", c.num_lanes},
              {"head_dim", c.head_dim},
              {"bits", c.bits},
              {"mem",
               {{"channels", c.mem.channels},
                {"bytes_per_cycle_per_channel", c.mem.bytes_per_cycle_per_channel},
                {"fixed_latency_cycles", c.mem.fixed_latency_cycles}}},
              {"max_outstanding_per_lane", c.max_outstanding_per_lane},
              {"scoreboard_entries", c.scoreboard_entries},
              {"mode", sim::to_string(c.mode)},
              {"clock_ghz", c.clock_ghz},
              {"energy",
               {{"e_bitop", c.energy.e_bitop},
                {"e_mac", c.energy.e_mac},
                {"e_sram_byte", c.energy.e_sram_byte},
                {"e_dram_byte", c.energy.e_dram_byte}}},
              {"prune", to_json(c.prune)},
              {"vpu_macs_per_cycle", c.vpu_macs_per_cycle},
              {"value_bits", c.value_bits},
              {"softmax_lut_bits", c.softmax_lut_bits}};
}

json to_json(const sim::SimStats& s, double clock_ghz) {
  return json{{"schema_version", 1},
              {"mode", sim::to_string(s.mode)},
              {"total_cycles", s.total_cycles},
              {"runtime_us", s.runtime_us(clock_ghz)},
              {"qk_cycles", s.qk_cycles},
              {"vpu_busy_cycles", s.vpu_busy_cycles},
              {"lane_utilization", s.lane_utilization},
              {"lane_busy_cycles", s.lane_busy_cycles},
              {"dram_bytes", s.dram_bytes},
              {"dram_key_bytes", s.dram_key_bytes},
              {"dram_value_bytes", s.dram_value_bytes},
              {"dram_query_bytes", s.dram_query_bytes},
              {"mem_requests_issued", s.mem_requests_issued},
              {"mem_requests_completed", s.mem_requests_completed},
              {"bitplane_fetches", s.bitplane_fetches},
              {"andertree_passes", s.andertree_passes},
              {"mac_ops", s.mac_ops},
              {"softmax_lookups", s.softmax_lookups},
              {"scoreboard_accesses", s.scoreboard_accesses},
              {"scoreboard_hits", s.scoreboard_hits},
              {"scoreboard_misses", s.scoreboard_misses},
              {"max_scoreboard_occupancy", s.max_scoreboard_occupancy},
              {"max_outstanding", s.max_outstanding},
              {"energy_pj",
               {{"compute", s.energy.compute_pj},
                {"onchip", s.energy.onchip_pj},
                {"dram", s.energy.dram_pj},
                {"total", s.energy.total_pj()}}},
              {"survivors_per_query", s.survivors_per_query}};
}

json to_json(const oracle::ViolationReport& r) {
  json v = json::array();
  for (const auto& x : r.violations) {
    v.push_back({{"kind", x.kind},
                 {"query", x.query},
                 {"key", x.key},
                 {"round", x.round},
                 {"lb", x.lb},
                 {"ub", x.ub},
                 {"exact", x.exact}});
  }
  return json{{"cases", r.cases}, {"passed", r.passed()}, {"violations", v}};
}

json to_json(const TraceEvent& e) {
  return json{{"query", e.query}, {"key", e.key},  {"round", e.round},
              {"lb", e.lb},       {"ub", e.ub},    {"eta", e.eta},
              {"action", to_string(e.action)}};
}

json to_json(const SyntheticSpec& s) {
  json dist;
  if (const auto* g = std::get_if<Gaussian>(&s.distribution)) {
    dist = {{"type", "gaussian"}, {"mean", g->mean}, {"std", g->std}};
  } else {
    const auto& p = std::get<Peaked>(s.distribution);
    dist = {{"type", "peaked"},
            {"num_hot", p.num_hot},
            {"hot_gain", p.hot_gain},
            {"base_std", p.base_std}};
  }
  return json{{"rows", s.rows}, {"cols", s.cols}, {"seed", s.seed}, {"distribution", dist}};
}

PruneConfig prune_config_from_json(const json& j) {
  const std::string where = "prune";
  check_keys(j, {"alpha", "radius", "prune_enabled", "keep_rule", "radius_units"}, where);
  PruneConfig c;
  read_field(j, "alpha", c.alpha, where);
  read_field(j, "radius", c.radius, where);
  read_field(j, "prune_enabled", c.prune_enabled, where);
  if (j.contains("keep_rule")) {
    std::string s;
    read_field(j, "keep_rule", s, where);
    if (s == "gte") {
      c.keep_rule = KeepRule::kGte;
    } else if (s == "strict") {
      c.keep_rule = KeepRule::kStrictGt;
    } else {
      throw sim::ConfigError("prune.keep_rule: expected 'gte' or 'strict', got '" + s + "'");
    }
  }
  if (j.contains("radius_units")) {
    std::string s;
    read_field(j, "radius_units", s, where);
    if (s == "logit") {
      c.radius_units = RadiusUnits::kLogit;
    } else if (s == "integer") {
      c.radius_units = RadiusUnits::kInteger;
    } else {
      throw sim::ConfigError("prune.radius_units: expected 'logit' or 'integer', got '" + s + "'");
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw sim::ConfigError(e.what());
  }
  return c;
}

sim::SimConfig sim_config_from_json(const json& j) {
  const std::string where = "config";
  check_keys(j,
             {"num_lanes", "head_dim", "bits", "mem", "max_outstanding_per_lane",
              "scoreboard_entries", "mode", "clock_ghz", "energy", "prune", "vpu_macs_per_cycle",
              "value_bits", "softmax_lut_bits"},
             where);
  sim::SimConfig c;
  read_size(j, "num_lanes", c.num_lanes, where);
  read_size(j, "head_dim", c.head_dim, where);
  read_field(j, "bits", c.bits, where);
  read_size(j, "max_outstanding_per_lane", c.max_outstanding_per_lane, where);
  read_size(j, "scoreboard_entries", c.scoreboard_entries, where);
  read_field(j, "clock_ghz", c.clock_ghz, where);
  read_size(j, "vpu_macs_per_cycle", c.vpu_macs_per_cycle, where);
  read_field(j, "value_bits", c.value_bits, where);
  read_field(j, "softmax_lut_bits", c.softmax_lut_bits, where);
  if (j.contains("mode")) {
    std::string s;
    read_field(j, "mode", s, where);
    const auto m = sim::parse_sim_mode(s);
    if (!m) throw sim::ConfigError("config.mode: unknown mode '" + s + "'");
    c.mode = *m;
  }
  if (j.contains("mem")) {
    const auto& m = j.at("mem");
    check_keys(m, {"channels", "bytes_per_cycle_per_channel", "fixed_latency_cycles"}, "mem");
    read_size(m, "channels", c.mem.channels, "mem");
    read_size(m, "bytes_per_cycle_per_channel", c.mem.bytes_per_cycle_per_channel, "mem");
    std::size_t lat = c.mem.fixed_latency_cycles;
    read_size(m, "fixed_latency_cycles", lat, "mem");
    c.mem.fixed_latency_cycles = lat;
  }
  if (j.contains("energy")) {
    const auto& e = j.at("energy");
    check_keys(e, {"e_bitop", "e_mac", "e_sram_byte", "e_dram_byte"}, "energy");
    read_field(e, "e_bitop", c.energy.e_bitop, "energy");
    read_field(e, "e_mac", c.energy.e_mac, "energy");
    read_field(e, "e_sram_byte", c.energy.e_sram_byte, "energy");
    read_field(e, "e_dram_byte", c.energy.e_dram_byte, "energy");
  }
  if (j.contains("prune")) c.prune = prune_config_from_json(j.at("prune"));
  try {
    c.validate();
  } catch (const sim::ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw sim::ConfigError(e.what());
  }
  return c;
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  const std::string where = "synthetic";
  check_keys(j, {"rows", "cols", "seed", "distribution"}, where);
  SyntheticSpec s;
  read_size(j, "rows", s.rows, where);
  read_size(j, "cols", s.cols, where);
  read_field(j, "seed", s.seed, where);
  if (j.contains("distribution")) {
    const auto& d = j.at("distribution");
    if (!d.is_object() || !d.contains("type") || !d.at("type").is_string()) {
      throw sim::ConfigError("synthetic.distribution: missing 'type'");
    }
    const auto type = d.at("type").get<std::string>();
    if (type == "gaussian") {
      check_keys(d, {"type", "mean", "std"}, "distribution");
      Gaussian g;
      read_field(d, "mean", g.mean, "distribution");
      read_field(d, "std", g.std, "distribution");
      s.distribution = g;
    } else if (type == "peaked") {
      check_keys(d, {"type", "num_hot", "hot_gain", "base_std"}, "distribution");
      Peaked p;
      read_size(d, "num_hot", p.num_hot, "distribution");
      read_field(d, "hot_gain", p.hot_gain, "distribution");
      read_field(d, "base_std", p.base_std, "distribution");
      s.distribution = p;
    } else {
      throw sim::ConfigError("synthetic.distribution.type: unknown '" + type + "'");
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw sim::ConfigError(e.what());
  }
  return s;
}

sim::SimConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw sim::ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw sim::ConfigError(path.string() + ": " + e.what());
  }
  return sim_config_from_json(j);
}

void write_trace_jsonl(std::ostream& os, const std::vector<PruneTrace>& traces) {
  for (const auto& t : traces) {
    for (const auto& e : t.events) os << to_json(e).dump() << '\n';
  }
}

std::vector<PruneTrace> read_trace_jsonl(std::istream& is, std::size_t num_keys, int bits) {
  std::map<std::size_t, PruneTrace> by_query;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&](const std::string& why) {
      return ParseError("trace line " + std::to_string(lineno) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(e.what());
    }
    if (!j.is_object()) throw fail("expected an object");
    for (const char* k : {"query", "key", "round", "lb", "ub", "eta", "action"}) {
      if (!j.contains(k)) throw fail(std::string("missing field '") + k + "'");
    }
    for (const char* k : {"query", "key", "round"}) {
      if (!j.at(k).is_number_unsigned()) throw fail(std::string("'") + k + "' must be a non-negative integer");
    }
    for (const char* k : {"lb", "ub", "eta"}) {
      if (!j.at(k).is_number_integer()) throw fail(std::string("'") + k + "' must be an integer");
    }
    if (!j.at("action").is_string()) throw fail("'action' must be a string");
    const auto action = parse_trace_action(j.at("action").get<std::string>());
    if (!action) throw fail("unknown action '" + j.at("action").get<std::string>() + "'");

    TraceEvent e;
    e.query = j.at("query").get<std::size_t>();
    e.key = j.at("key").get<std::size_t>();
    const auto round = j.at("round").get<std::uint64_t>();
    e.lb = j.at("lb").get<std::int64_t>();
    e.ub = j.at("ub").get<std::int64_t>();
    e.eta = j.at("eta").get<std::int64_t>();
    e.action = *action;
    if (e.key >= num_keys) throw fail("key " + std::to_string(e.key) + " out of range");
    if (round >= static_cast<std::uint64_t>(bits)) throw fail("round " + std::to_string(round) + " out of range");
    e.round = static_cast<int>(round);
    if (e.lb > e.ub) throw fail("lb exceeds ub");

    auto& t = by_query[e.query];
    t.query = e.query;
    t.num_keys = num_keys;
    t.bits = bits;
    t.events.push_back(e);
  }
  if (is.bad()) throw ParseError("read error while parsing trace");
  std::vector<PruneTrace> out;
  for (auto& [_, t] : by_query) out.push_back(std::move(t));
  return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace bsattn
