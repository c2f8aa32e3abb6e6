#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bsattn/sim/config.hpp"

namespace bsattn::sim {

struct ScoreboardEntry {
  std::size_t token = 0;
  std::int64_t partial = 0;
  int last_round = -1;
  bool valid = false;
};

/// Packs slot tag, partial and valid bit into the low 45 bits.
std::uint64_t pack_entry(std::uint32_t slot, std::int64_t partial, bool valid);

struct UnpackedEntry {
  std::uint32_t slot;
  std::int64_t partial;
  bool valid;
};
UnpackedEntry unpack_entry(std::uint64_t word);

/// Fixed-capacity associative store of partial scores, looked up by token.
class Scoreboard {
 public:
  explicit Scoreboard(std::size_t capacity);

  std::size_t capacity() const { return slots_.size(); }
  std::size_t live() const { return live_; }
  bool full() const { return live_ == slots_.size(); }

  /// Slot holding `token`, if any (the Hit signal).
  std::optional<std::size_t> find(std::size_t token) const;

  /// Writes a fresh entry; throws std::logic_error when full.
  std::size_t insert(std::size_t token, std::int64_t partial, int round);
  void update(std::size_t slot, std::int64_t partial, int round);
  void erase(std::size_t slot);

  const ScoreboardEntry& at(std::size_t slot) const { return slots_.at(slot); }
  std::uint64_t packed(std::size_t slot) const;

 private:
  std::vector<ScoreboardEntry> slots_;
  std::size_t live_ = 0;
};

}  // namespace bsattn::sim
