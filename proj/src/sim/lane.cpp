#include "bsattn/sim/lane.hpp"

#include <algorithm>
#include <stdexcept>

namespace bsattn::sim {

Lane::Lane(std::size_t id, const SimConfig& cfg)
    : id_(id),
      dense_(cfg.mode == SimMode::kDense),
      bits_(cfg.bits),
      max_outstanding_(cfg.effective_outstanding()),
      scoreboard_cap_(cfg.scoreboard_entries),
      scoreboard_(cfg.scoreboard_entries) {}

void Lane::assign(std::vector<std::size_t> keys) {
  if (!done()) throw std::logic_error("lane reassigned while busy");
  if (dense_) {
    dense_keys_ = std::move(keys);
    dense_cursor_ = 0;
    dense_round_ = 0;
  } else {
    pending_.assign(keys.begin(), keys.end());
  }
}

bool Lane::done() const {
  const bool dense_done = dense_cursor_ >= dense_keys_.size();
  return pending_.empty() && follow_.empty() && arrivals_.empty() && outstanding_ == 0 &&
         in_flight_keys_ == 0 && dense_done;
}

std::optional<std::uint64_t> Lane::next_ready() const {
  if (arrivals_.empty()) return std::nullopt;
  return arrivals_.top().ready;
}

bool Lane::step(std::uint64_t now, QueryContext& ctx) {
  bool active = false;
  if (!arrivals_.empty() && arrivals_.top().ready <= now) {
    const Arrival a = arrivals_.top();
    arrivals_.pop();
    compute(now, a, ctx);
    ++counters_.busy_cycles;
    active = true;
  }
  if (issue(now, ctx)) active = true;
  return active;
}

void Lane::compute(std::uint64_t now, const Arrival& a, QueryContext& ctx) {
  --outstanding_;
  const auto delta = partial_delta(ctx.query, ctx.keys->plane(a.key, a.round), a.round, bits_);
  const bool last = a.round == bits_ - 1;
  if (ctx.events) ctx.events->push_back({now, "lane" + std::to_string(id_), "compute", a.key, a.round});

  std::int64_t partial = 0;
  if (dense_) {
    partial = (dense_partials_[a.key] += delta);
  } else {
    ++counters_.scoreboard_accesses;
    if (auto slot = scoreboard_.find(a.key)) {
      ++counters_.scoreboard_hits;
      partial = scoreboard_.at(*slot).partial + delta;
      scoreboard_.update(*slot, partial, a.round);
    } else {
      // MSB plane: nothing to reuse, write the delta directly
      ++counters_.scoreboard_misses;
      partial = delta;
      scoreboard_.insert(a.key, partial, a.round);
    }
    ++counters_.scoreboard_accesses;
    counters_.max_live_entries = std::max(counters_.max_live_entries, scoreboard_.live());
  }

  const auto iv = score_bounds(partial, *ctx.margins, a.round);
  const auto eta = ctx.lats->eta();
  const bool keep = dense_ || !ctx.prune || keep_token(iv.ub, eta, ctx.keep_rule);
  ctx.lats->update(iv.lb);
  ctx.trace->push_back({ctx.query_index, a.key, a.round, iv.lb, iv.ub, eta,
                        keep ? TraceAction::kKeep : TraceAction::kEvict});
  if (ctx.events) {
    ctx.events->push_back({now, "lane" + std::to_string(id_), keep ? "keep" : "evict", a.key, a.round});
  }

  const bool retire = !keep || last;
  if (retire) {
    if (keep) ctx.completed->emplace_back(a.key, partial);
    if (dense_) {
      dense_partials_.erase(a.key);
    } else {
      scoreboard_.erase(*scoreboard_.find(a.key));
    }
    --in_flight_keys_;
  } else if (!dense_) {
    follow_.emplace_back(a.key, a.round + 1);
  }
}

bool Lane::issue(std::uint64_t now, QueryContext& ctx) {
  if (dense_) {
    if (dense_cursor_ >= dense_keys_.size()) return false;
    const auto key = dense_keys_[dense_cursor_];
    if (dense_round_ == 0) ++in_flight_keys_;
    send(now, key, dense_round_, ctx);
    if (++dense_round_ == bits_) {
      dense_round_ = 0;
      ++dense_cursor_;
    }
    return true;
  }
  if (outstanding_ >= max_outstanding_) return false;
  if (!follow_.empty()) {
    const auto [key, round] = follow_.front();
    follow_.pop_front();
    send(now, key, round, ctx);
    return true;
  }
  if (!pending_.empty() && in_flight_keys_ < scoreboard_cap_) {
    const auto key = pending_.front();
    pending_.pop_front();
    ++in_flight_keys_;
    send(now, key, 0, ctx);
    return true;
  }
  return false;
}

void Lane::send(std::uint64_t now, std::size_t key, int round, QueryContext& ctx) {
  MemRequest req;
  req.kind = RequestKind::kKeyPlane;
  req.key = key;
  req.round = round;
  req.channel = MemoryModel::plane_channel(key, round, bits_, ctx.memory->config().channels);
  req.size_bytes = ctx.keys->plane_bytes();
  req.issue_cycle = now;
  ctx.memory->service(req);
  arrivals_.push({req.complete_cycle, key, round});
  ++outstanding_;
  ++counters_.plane_fetches;
  counters_.max_outstanding = std::max(counters_.max_outstanding, outstanding_);
  if (ctx.events) ctx.events->push_back({now, "lane" + std::to_string(id_), "issue", key, round});
}

}  // namespace bsattn::sim
