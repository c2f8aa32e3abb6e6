#include "bsattn/sim/config.hpp"

#include <cmath>

#include "bsattn/margin.hpp"

namespace bsattn::sim {

const char* to_string(SimMode m) {
  switch (m) {
    case SimMode::kDense: return "dense";
    case SimMode::kBesfSync: return "besf_sync";
    case SimMode::kBesfBap: return "besf_bap";
  }
  return "?";
}

std::optional<SimMode> parse_sim_mode(const std::string& s) {
  if (s == "dense") return SimMode::kDense;
  if (s == "besf_sync") return SimMode::kBesfSync;
  if (s == "besf_bap") return SimMode::kBesfBap;
  return std::nullopt;
}

void SimConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(num_lanes >= 1, "num_lanes must be >= 1");
  require(head_dim >= 1, "head_dim must be >= 1");
  require(bits >= 2 && bits <= 16, "bit_width must lie in [2, 16]");
  require(mem.channels >= 1, "mem.channels must be >= 1");
  require(mem.bytes_per_cycle_per_channel >= 1, "mem.bytes_per_cycle_per_channel must be >= 1");
  require(max_outstanding_per_lane >= 1, "max_outstanding_per_lane must be >= 1");
  require(scoreboard_entries >= 1, "scoreboard_entries must be >= 1");
  require(scoreboard_entries <= (std::size_t{1} << kScoreboardTagBits),
          "scoreboard_entries exceeds the 6-bit slot tag");
  require(clock_ghz > 0.0 && std::isfinite(clock_ghz), "clock_ghz must be positive");
  require(energy.e_bitop >= 0.0 && energy.e_mac >= 0.0 && energy.e_sram_byte >= 0.0 &&
              energy.e_dram_byte >= 0.0,
          "energy constants must be >= 0");
  require(vpu_macs_per_cycle >= 1, "vpu_macs_per_cycle must be >= 1");
  require(value_bits >= 2 && value_bits <= 32, "value_bits must lie in [2, 32]");
  try {
    prune.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("prune: ") + e.what());
  }

  check_accumulator_width(head_dim, bits);
  // Worst-case |partial| is H * 2^(N-1) * 2^(N-1); it must fit the signed
  // scoreboard field.
  const int need = 2 * (bits - 1) + static_cast<int>(std::ceil(std::log2(static_cast<double>(head_dim))));
  if (need > kScoreboardPartialBits - 1) {
    throw WidthError("partial scores need " + std::to_string(need + 1) +
                     " signed bits; scoreboard field holds " +
                     std::to_string(kScoreboardPartialBits));
  }
}

std::size_t SimConfig::effective_outstanding() const {
  return mode == SimMode::kBesfSync ? 1 : max_outstanding_per_lane;
}

}  // namespace bsattn::sim
