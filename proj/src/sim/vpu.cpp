#include "bsattn/sim/vpu.hpp"

#include <algorithm>

namespace bsattn::sim {

VpuTiming vpu_run(std::uint64_t start, std::span<const std::uint64_t> value_ready,
                  std::size_t head_dim, std::size_t macs_per_cycle) {
  VpuTiming t;
  t.start = start;
  const std::uint64_t per_row = (head_dim + macs_per_cycle - 1) / macs_per_cycle;
  const std::uint64_t n = value_ready.size();
  t.softmax_cycles = n;
  t.mac_cycles = n * per_row;
  t.mac_ops = n * head_dim;
  t.lut_lookups = n;

  std::uint64_t mac_free = start;
  for (std::uint64_t k = 0; k < n; ++k) {
    // weight k leaves the LUT at start + k and is usable a cycle later
    const std::uint64_t begin = std::max({value_ready[k], start + k + 1, mac_free});
    mac_free = begin + per_row;
  }
  t.end = n == 0 ? start : mac_free;
  return t;
}

}  // namespace bsattn::sim
