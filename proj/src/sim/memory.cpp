#include "bsattn/sim/memory.hpp"

#include <algorithm>
#include <stdexcept>

namespace bsattn::sim {

MemoryModel::MemoryModel(const MemConfig& cfg)
    : cfg_(cfg), free_slot_(cfg.channels, 0), last_issue_(cfg.channels, 0) {
  if (cfg.channels == 0 || cfg.bytes_per_cycle_per_channel == 0) {
    throw std::invalid_argument("memory needs at least one channel and one byte per cycle");
  }
}

std::uint64_t MemoryModel::service(MemRequest& req) {
  if (req.channel >= cfg_.channels) throw std::out_of_range("channel out of range");
  if (req.issue_cycle < last_issue_[req.channel]) {
    throw std::logic_error("memory requests must arrive in issue order");
  }
  last_issue_[req.channel] = req.issue_cycle;

  const std::uint64_t bpc = cfg_.bytes_per_cycle_per_channel;
  auto& slot = free_slot_[req.channel];
  const std::uint64_t start = std::max(slot, req.issue_cycle * bpc);
  slot = start + req.size_bytes;
  const std::uint64_t last_byte_cycle = (slot + bpc - 1) / bpc;
  req.complete_cycle = last_byte_cycle + cfg_.fixed_latency_cycles;

  bytes_ += req.size_bytes;
  ++requests_;
  return req.complete_cycle;
}

std::uint64_t MemoryModel::channel_free_cycle(std::size_t c) const {
  const std::uint64_t bpc = cfg_.bytes_per_cycle_per_channel;
  return (free_slot_.at(c) + bpc - 1) / bpc;
}

}  // namespace bsattn::sim
