#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "bsattn/besf.hpp"
#include "bsattn/margin.hpp"
#include "bsattn/sim/config.hpp"
#include "bsattn/sim/lats_unit.hpp"
#include "bsattn/sim/memory.hpp"
#include "bsattn/sim/scoreboard.hpp"

namespace bsattn::sim {

struct SimEvent {
  std::uint64_t cycle = 0;
  std::string unit;
  std::string event;
  std::size_t key = 0;
  int round = 0;
};

/// Everything a lane reads or writes outside itself while one query runs.
struct QueryContext {
  std::size_t query_index = 0;
  std::span<const std::int32_t> query;
  const BitPlaneStore* keys = nullptr;
  const MarginTable* margins = nullptr;
  KeepRule keep_rule = KeepRule::kGte;
  bool prune = true;

  MemoryModel* memory = nullptr;
  LatsUnit* lats = nullptr;
  std::vector<TraceEvent>* trace = nullptr;
  std::vector<std::pair<std::size_t, std::int64_t>>* completed = nullptr;  // (key, exact score)
  std::vector<SimEvent>* events = nullptr;                                 // optional
};

struct LaneCounters {
  std::uint64_t busy_cycles = 0;
  std::uint64_t plane_fetches = 0;
  std::uint64_t scoreboard_hits = 0;
  std::uint64_t scoreboard_misses = 0;
  std::uint64_t scoreboard_accesses = 0;
  std::size_t max_outstanding = 0;
  std::size_t max_live_entries = 0;
};

/// One bit-level PE lane: an ANDer tree that retires one plane per cycle, a
/// scoreboard of partial scores, and a pruning engine.
///
/// Per cycle: compute the earliest-arrived plane (ties by key, then round),
/// then issue at most one request. Continuing keys have issue priority over
/// fresh MSB fetches; fresh keys also need a free scoreboard slot. Dense
/// lanes stream every plane of every key in order with no pruning.
class Lane {
 public:
  Lane(std::size_t id, const SimConfig& cfg);

  void assign(std::vector<std::size_t> keys);

  /// Runs one cycle. Returns true if the lane computed or issued anything.
  bool step(std::uint64_t now, QueryContext& ctx);

  bool done() const;

  /// Ready cycle of the earliest outstanding plane, if any.
  std::optional<std::uint64_t> next_ready() const;

  std::size_t id() const { return id_; }
  std::size_t outstanding() const { return outstanding_; }
  const LaneCounters& counters() const { return counters_; }
  const Scoreboard& scoreboard() const { return scoreboard_; }

 private:
  struct Arrival {
    std::uint64_t ready;
    std::size_t key;
    int round;
    bool operator>(const Arrival& o) const {
      if (ready != o.ready) return ready > o.ready;
      if (key != o.key) return key > o.key;
      return round > o.round;
    }
  };

  void compute(std::uint64_t now, const Arrival& a, QueryContext& ctx);
  bool issue(std::uint64_t now, QueryContext& ctx);
  void send(std::uint64_t now, std::size_t key, int round, QueryContext& ctx);

  std::size_t id_;
  bool dense_;
  int bits_;
  std::size_t max_outstanding_;
  std::size_t scoreboard_cap_;

  std::deque<std::size_t> pending_;                  // keys with no plane issued yet
  std::deque<std::pair<std::size_t, int>> follow_;   // next planes of surviving keys
  std::priority_queue<Arrival, std::vector<Arrival>, std::greater<>> arrivals_;
  std::size_t outstanding_ = 0;
  std::size_t in_flight_keys_ = 0;

  Scoreboard scoreboard_;
  std::map<std::size_t, std::int64_t> dense_partials_;
  std::size_t dense_cursor_ = 0;
  int dense_round_ = 0;
  std::vector<std::size_t> dense_keys_;

  LaneCounters counters_;
};

}  // namespace bsattn::sim
