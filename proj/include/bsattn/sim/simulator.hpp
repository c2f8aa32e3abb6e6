#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsattn/besf.hpp"
#include "bsattn/sim/config.hpp"
#include "bsattn/sim/lane.hpp"

namespace bsattn::sim {

class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnergyBreakdown {
  double compute_pj = 0.0;
  double onchip_pj = 0.0;
  double dram_pj = 0.0;
  double total_pj() const { return compute_pj + onchip_pj + dram_pj; }
};

struct SimStats {
  SimMode mode = SimMode::kBesfBap;
  std::uint64_t total_cycles = 0;
  std::uint64_t qk_cycles = 0;   // sum of QK-PU phase lengths
  std::uint64_t vpu_busy_cycles = 0;
  double lane_utilization = 0.0;
  std::uint64_t lane_busy_cycles = 0;

  std::uint64_t dram_bytes = 0;
  std::uint64_t dram_key_bytes = 0;
  std::uint64_t dram_value_bytes = 0;
  std::uint64_t dram_query_bytes = 0;
  std::uint64_t mem_requests_issued = 0;
  std::uint64_t mem_requests_completed = 0;

  std::uint64_t bitplane_fetches = 0;
  std::uint64_t andertree_passes = 0;
  std::uint64_t mac_ops = 0;
  std::uint64_t softmax_lookups = 0;
  std::uint64_t scoreboard_accesses = 0;
  std::uint64_t scoreboard_hits = 0;
  std::uint64_t scoreboard_misses = 0;
  std::size_t max_scoreboard_occupancy = 0;
  std::size_t max_outstanding = 0;

  EnergyBreakdown energy;
  std::vector<std::size_t> survivors_per_query;

  double runtime_us(double clock_ghz) const {
    return static_cast<double>(total_cycles) / (clock_ghz * 1e3);
  }
};

struct SimResult {
  SimStats stats;
  AttentionOutput output;
  std::vector<PruneTrace> traces;
  std::int64_t gap = 0;
};

struct RunOptions {
  std::vector<SimEvent>* events = nullptr;  // optional per-event log
};

/// Discrete-event run of the whole attention block. Queries pass through the
/// QK-PU one at a time; the V-PU works on query i while the QK-PU runs i+1.
/// The numeric output is produced by scoring the simulator's own survivor
/// sets through the golden scoring path.
SimResult run_sim(const SimConfig& cfg, const TensorF32& q, const TensorF32& k,
                  const TensorF32& v, const RunOptions& opts = {});

/// The same machine with pruning hardware removed: every plane of every key
/// is streamed and every key reaches the V-PU.
SimStats run_dense_baseline(const SimConfig& cfg, const TensorF32& q, const TensorF32& k,
                            const TensorF32& v);

/// Closed-form lower bound for dense mode: max(compute, memory) cycles.
struct Roofline {
  double qk_compute_cycles = 0.0;
  double vpu_compute_cycles = 0.0;
  double memory_cycles = 0.0;
  double bound() const;
};
Roofline dense_roofline(const SimConfig& cfg, std::size_t num_queries, std::size_t num_keys);

/// Checks each recorded keep/evict decision against keep_token(ub, eta).
/// Returns the number of mismatches.
std::size_t replay_decisions(const PruneTrace& trace, KeepRule rule);

void write_events_csv(std::ostream& os, const std::vector<SimEvent>& events);

}  // namespace bsattn::sim
