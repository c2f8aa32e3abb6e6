#pragma once

#include <cstdint>
#include <span>

namespace bsattn::sim {

struct VpuTiming {
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  std::uint64_t softmax_cycles = 0;
  std::uint64_t mac_cycles = 0;
  std::uint64_t mac_ops = 0;
  std::uint64_t lut_lookups = 0;
};

/// Softmax LUT streams one element per cycle; the MAC array consumes one
/// Value row every ceil(H / width) cycles as soon as both the row and its
/// weight are ready. `value_ready` holds the arrival cycle of each survivor's
/// Value row, in processing order.
VpuTiming vpu_run(std::uint64_t start, std::span<const std::uint64_t> value_ready,
                  std::size_t head_dim, std::size_t macs_per_cycle);

}  // namespace bsattn::sim
