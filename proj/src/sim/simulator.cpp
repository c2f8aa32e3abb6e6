#include "bsattn/sim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bsattn/sim/lats_unit.hpp"
#include "bsattn/sim/memory.hpp"
#include "bsattn/sim/vpu.hpp"

namespace bsattn::sim {
namespace {

constexpr std::uint64_t kScoreboardEntryBytes = (kScoreboardEntryBits + 7) / 8;
constexpr std::uint64_t kLutEntryBytes = 3;  // 18-bit entries

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::vector<std::vector<std::size_t>> block_assignment(std::size_t num_keys, std::size_t lanes) {
  std::vector<std::vector<std::size_t>> blocks(lanes);
  const auto base = num_keys / lanes;
  const auto rem = num_keys % lanes;
  std::size_t next = 0;
  for (std::size_t l = 0; l < lanes; ++l) {
    const auto n = base + (l < rem ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) blocks[l].push_back(next++);
  }
  return blocks;
}

}  // namespace

SimResult run_sim(const SimConfig& cfg, const TensorF32& q, const TensorF32& k, const TensorF32& v,
                  const RunOptions& opts) {
  cfg.validate();
  check_attention_shapes(q, k, v);
  if (static_cast<std::size_t>(k.cols()) != cfg.head_dim) {
    throw ConfigError("tensors have head_dim " + std::to_string(k.cols()) + " but config says " +
                      std::to_string(cfg.head_dim));
  }
  const auto num_queries = static_cast<std::size_t>(q.rows());
  const auto num_keys = static_cast<std::size_t>(k.rows());
  const auto head_dim = cfg.head_dim;
  const bool dense = cfg.mode == SimMode::kDense;
  const bool prune_active = !dense && cfg.prune.prune_enabled;

  const auto qq = quantize(q, cfg.bits);
  const auto kq = quantize(k, cfg.bits);
  const auto store = decompose_bitplanes(kq);

  SimResult result;
  result.gap = threshold_gap(cfg.prune, head_dim, qq.params.scale, kq.params.scale);
  auto& stats = result.stats;
  stats.mode = cfg.mode;

  MemoryModel memory(cfg.mem);
  LatsUnit lats(result.gap);
  std::vector<Lane> lanes;
  for (std::size_t l = 0; l < cfg.num_lanes; ++l) lanes.emplace_back(l, cfg);
  const auto blocks = block_assignment(num_keys, cfg.num_lanes);

  const std::size_t q_bytes = ceil_div(head_dim * static_cast<std::size_t>(cfg.bits), 8);
  const std::size_t v_bytes = ceil_div(head_dim * static_cast<std::size_t>(cfg.value_bits), 8);

  std::vector<std::uint64_t> side_completions;  // Q and V rows
  auto fetch_query = [&](std::size_t i, std::uint64_t now) {
    MemRequest req{RequestKind::kQueryRow, i, 0, i % cfg.mem.channels, q_bytes, now, 0};
    stats.dram_query_bytes += q_bytes;
    side_completions.push_back(memory.service(req));
    return side_completions.back();
  };

  result.output.rows.resize(static_cast<Eigen::Index>(num_queries), v.cols());
  std::uint64_t next_q_ready = fetch_query(0, 0);
  std::uint64_t handoff = 0;
  std::uint64_t vpu_end = 0;

  for (std::size_t i = 0; i < num_queries; ++i) {
    const Vector<std::int32_t> qrow = qq.values.row(static_cast<Eigen::Index>(i)).transpose();
    const std::span<const std::int32_t> qspan(qrow.data(), head_dim);
    const auto margins = build_margin_table(qspan, cfg.bits, i);
    // margin generator emits one pair per cycle once Q_i is on chip
    const std::uint64_t qk_start = std::max(handoff, next_q_ready + static_cast<std::uint64_t>(cfg.bits));
    if (i + 1 < num_queries) next_q_ready = fetch_query(i + 1, qk_start);

    lats.reset(result.gap);
    for (std::size_t l = 0; l < lanes.size(); ++l) lanes[l].assign(blocks[l]);

    PruneTrace trace;
    trace.query = i;
    trace.num_keys = num_keys;
    trace.bits = cfg.bits;
    trace.gap = result.gap;
    std::vector<std::pair<std::size_t, std::int64_t>> completed;
    std::map<std::size_t, std::uint64_t> value_ready;

    QueryContext ctx;
    ctx.query_index = i;
    ctx.query = qspan;
    ctx.keys = &store;
    ctx.margins = &margins;
    ctx.keep_rule = cfg.prune.keep_rule;
    ctx.prune = prune_active;
    ctx.memory = &memory;
    ctx.lats = &lats;
    ctx.trace = &trace.events;
    ctx.completed = &completed;
    ctx.events = opts.events;

    std::uint64_t t = qk_start;
    std::size_t seen_completed = 0;
    for (;;) {
      bool active = false;
      for (auto& lane : lanes) active = lane.step(t, ctx) || active;
      lats.commit();
      // Value rows of keys that cleared the LSB are prefetched right away.
      for (; seen_completed < completed.size(); ++seen_completed) {
        const auto key = completed[seen_completed].first;
        MemRequest req{RequestKind::kValueRow, key, 0, key % cfg.mem.channels, v_bytes, t, 0};
        value_ready[key] = memory.service(req);
        side_completions.push_back(value_ready[key]);
        stats.dram_value_bytes += v_bytes;
      }
      if (std::all_of(lanes.begin(), lanes.end(), [](const Lane& l) { return l.done(); })) break;
      if (active) {
        ++t;
        continue;
      }
      std::optional<std::uint64_t> next;
      for (const auto& lane : lanes) {
        if (auto r = lane.next_ready()) next = next ? std::min(*next, *r) : *r;
      }
      if (!next) {
        throw DeadlockError("query " + std::to_string(i) + ": lanes idle at cycle " +
                            std::to_string(t) + " with unresolved keys and nothing in flight");
      }
      t = std::max(t + 1, *next);
    }
    const std::uint64_t qk_end = t + 1;
    stats.qk_cycles += qk_end - qk_start;

    // Completed keys still face the final threshold once every bound is in.
    const auto final_eta = lats.eta();
    std::sort(completed.begin(), completed.end());
    std::vector<std::size_t> survivors;
    for (const auto& [key, exact] : completed) {
      const bool keep = !prune_active || keep_token(exact, final_eta, cfg.prune.keep_rule);
      trace.events.push_back({i, key, cfg.bits - 1, exact, exact, final_eta,
                              keep ? TraceAction::kFinal : TraceAction::kEvict});
      if (keep) survivors.push_back(key);
    }
    if (survivors.empty()) {
      throw std::runtime_error("query " + std::to_string(i) + ": every key was pruned");
    }

    std::vector<std::uint64_t> ready;
    ready.reserve(survivors.size());
    for (auto key : survivors) ready.push_back(value_ready.at(key));
    const auto timing = vpu_run(std::max(qk_end, vpu_end), ready, head_dim, cfg.vpu_macs_per_cycle);
    if (opts.events) {
      opts.events->push_back({timing.start, "vpu", "start", i, 0});
      opts.events->push_back({timing.end, "vpu", "end", i, 0});
    }
    handoff = timing.start;
    vpu_end = timing.end;
    stats.vpu_busy_cycles += timing.mac_cycles;
    stats.mac_ops += timing.mac_ops;
    stats.softmax_lookups += timing.lut_lookups;
    stats.survivors_per_query.push_back(survivors.size());

    // Functional output: score exactly the survivors this schedule kept.
    const auto scores = score_survivors(qspan, store, survivors, i);
    const auto p = sparse_softmax(scores, num_keys, head_dim, qq.params.scale, kq.params.scale);
    result.output.rows.row(static_cast<Eigen::Index>(i)) = sparse_sv(p, v).transpose();
    result.output.survivor_counts.push_back(survivors.size());
    result.traces.push_back(std::move(trace));
  }

  stats.total_cycles = vpu_end;
  for (const auto& lane : lanes) {
    const auto& c = lane.counters();
    stats.lane_busy_cycles += c.busy_cycles;
    stats.bitplane_fetches += c.plane_fetches;
    stats.scoreboard_accesses += c.scoreboard_accesses;
    stats.scoreboard_hits += c.scoreboard_hits;
    stats.scoreboard_misses += c.scoreboard_misses;
    stats.max_scoreboard_occupancy = std::max(stats.max_scoreboard_occupancy, c.max_live_entries);
    stats.max_outstanding = std::max(stats.max_outstanding, c.max_outstanding);
  }
  stats.andertree_passes = stats.lane_busy_cycles;
  stats.mem_requests_completed =
      stats.lane_busy_cycles +
      static_cast<std::uint64_t>(std::count_if(side_completions.begin(), side_completions.end(),
                                               [&](std::uint64_t c) { return c <= vpu_end; }));
  stats.mem_requests_issued = memory.requests();
  stats.dram_key_bytes = stats.bitplane_fetches * store.plane_bytes();
  stats.dram_bytes = memory.bytes();
  stats.lane_utilization =
      stats.total_cycles == 0
          ? 0.0
          : static_cast<double>(stats.lane_busy_cycles) /
                (static_cast<double>(cfg.num_lanes) * static_cast<double>(stats.total_cycles));

  const auto& e = cfg.energy;
  stats.energy.compute_pj =
      static_cast<double>(stats.andertree_passes) * static_cast<double>(head_dim * cfg.bits) * e.e_bitop +
      static_cast<double>(stats.mac_ops) * e.e_mac;
  stats.energy.onchip_pj =
      static_cast<double>(stats.dram_bytes + stats.scoreboard_accesses * kScoreboardEntryBytes +
                          stats.softmax_lookups * kLutEntryBytes) *
      e.e_sram_byte;
  stats.energy.dram_pj = static_cast<double>(stats.dram_bytes) * e.e_dram_byte;
  return result;
}

SimStats run_dense_baseline(const SimConfig& cfg, const TensorF32& q, const TensorF32& k,
                            const TensorF32& v) {
  SimConfig dense = cfg;
  dense.mode = SimMode::kDense;
  return run_sim(dense, q, k, v).stats;
}

double Roofline::bound() const {
  return std::max({qk_compute_cycles, vpu_compute_cycles, memory_cycles});
}

Roofline dense_roofline(const SimConfig& cfg, std::size_t num_queries, std::size_t num_keys) {
  Roofline r;
  const double nq = static_cast<double>(num_queries);
  const double s = static_cast<double>(num_keys);
  const double n = cfg.bits;
  r.qk_compute_cycles = nq * static_cast<double>(ceil_div(num_keys, cfg.num_lanes)) * n;
  r.vpu_compute_cycles = nq * s * static_cast<double>(ceil_div(cfg.head_dim, cfg.vpu_macs_per_cycle));
  const double plane = static_cast<double>(ceil_div(cfg.head_dim, 8));
  const double vrow = static_cast<double>(ceil_div(cfg.head_dim * static_cast<std::size_t>(cfg.value_bits), 8));
  const double qrow = static_cast<double>(ceil_div(cfg.head_dim * static_cast<std::size_t>(cfg.bits), 8));
  const double bytes = nq * (s * n * plane + s * vrow + qrow);
  r.memory_cycles =
      bytes / static_cast<double>(cfg.mem.channels * cfg.mem.bytes_per_cycle_per_channel);
  return r;
}

std::size_t replay_decisions(const PruneTrace& trace, KeepRule rule) {
  std::size_t mismatches = 0;
  for (const auto& e : trace.events) {
    const bool kept = e.action != TraceAction::kEvict;
    if (kept != keep_token(e.ub, e.eta, rule)) ++mismatches;
  }
  return mismatches;
}

void write_events_csv(std::ostream& os, const std::vector<SimEvent>& events) {
  os << "cycle,unit,event,key,round\n";
  for (const auto& e : events) {
    os << e.cycle << ',' << e.unit << ',' << e.event << ',' << e.key << ',' << e.round << '\n';
  }
}

}  // namespace bsattn::sim
