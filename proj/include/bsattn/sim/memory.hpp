#pragma once

#include <cstdint>
#include <vector>

#include "bsattn/sim/config.hpp"

namespace bsattn::sim {

enum class RequestKind { kKeyPlane, kValueRow, kQueryRow };

struct MemRequest {
  RequestKind kind = RequestKind::kKeyPlane;
  std::size_t key = 0;
  int round = 0;
  std::size_t channel = 0;
  std::size_t size_bytes = 0;
  std::uint64_t issue_cycle = 0;
  std::uint64_t complete_cycle = 0;
};

/// Independent fixed-latency channels with a byte-granular FIFO data bus.
/// A request starts transferring once the bus has drained everything queued
/// before it; it completes fixed_latency cycles after its last byte leaves.
/// With an idle channel this reduces to issue + latency + ceil(size / B).
/// Requests must be presented in non-decreasing issue order.
class MemoryModel {
 public:
  explicit MemoryModel(const MemConfig& cfg);

  static std::size_t plane_channel(std::size_t key, int round, int bits, std::size_t channels) {
    return (key * static_cast<std::size_t>(bits) + static_cast<std::size_t>(round)) % channels;
  }

  /// Fills in req.complete_cycle and returns it.
  std::uint64_t service(MemRequest& req);

  std::uint64_t bytes() const { return bytes_; }
  std::uint64_t requests() const { return requests_; }
  /// Cycle at which channel c's bus is next free.
  std::uint64_t channel_free_cycle(std::size_t c) const;

  const MemConfig& config() const { return cfg_; }

 private:
  MemConfig cfg_;
  std::vector<std::uint64_t> free_slot_;  // in byte slots: cycle * bytes_per_cycle
  std::vector<std::uint64_t> last_issue_;
  std::uint64_t bytes_ = 0;
  std::uint64_t requests_ = 0;
};

}  // namespace bsattn::sim
