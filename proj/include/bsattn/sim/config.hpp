#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include "bsattn/besf.hpp"

namespace bsattn::sim {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class SimMode { kDense, kBesfSync, kBesfBap };

const char* to_string(SimMode m);
std::optional<SimMode> parse_sim_mode(const std::string& s);

struct MemConfig {
  std::size_t channels = 8;
  // 128-bit at 2 Gbps per pin = 32 GB/s per channel = 32 B/cycle at 1 GHz.
  std::size_t bytes_per_cycle_per_channel = 32;
  std::uint64_t fixed_latency_cycles = 100;
};

// Order-of-magnitude placeholders in pJ, not calibrated to any process.
struct EnergyConfig {
  double e_bitop = 0.05;
  double e_mac = 1.0;
  double e_sram_byte = 1.5;
  double e_dram_byte = 60.0;
};

struct SimConfig {
  std::size_t num_lanes = 32;
  std::size_t head_dim = 64;
  int bits = 12;
  MemConfig mem;
  std::size_t max_outstanding_per_lane = 8;
  std::size_t scoreboard_entries = 64;
  SimMode mode = SimMode::kBesfBap;
  double clock_ghz = 1.0;
  EnergyConfig energy;
  PruneConfig prune;
  std::size_t vpu_macs_per_cycle = 64;
  int value_bits = 12;
  int softmax_lut_bits = 18;  // documentation only; the LUT is not modeled numerically

  /// Throws ConfigError (or WidthError) on any out-of-range field.
  void validate() const;

  /// Outstanding-request cap the lanes actually use: 1 in besf_sync.
  std::size_t effective_outstanding() const;
};

// Scoreboard entry: 6-bit slot tag | 38-bit signed partial | valid.
inline constexpr int kScoreboardTagBits = 6;
inline constexpr int kScoreboardPartialBits = 38;
inline constexpr int kScoreboardEntryBits = kScoreboardTagBits + kScoreboardPartialBits + 1;

}  // namespace bsattn::sim
