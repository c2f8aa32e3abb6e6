#include "bsattn/sim/scoreboard.hpp"

#include <stdexcept>

namespace bsattn::sim {

std::uint64_t pack_entry(std::uint32_t slot, std::int64_t partial, bool valid) {
  constexpr std::int64_t lim = std::int64_t{1} << (kScoreboardPartialBits - 1);
  if (partial < -lim || partial >= lim) throw std::overflow_error("partial exceeds 38-bit field");
  if (slot >= (1u << kScoreboardTagBits)) throw std::out_of_range("slot exceeds 6-bit tag");
  const std::uint64_t mask = (std::uint64_t{1} << kScoreboardPartialBits) - 1;
  return (static_cast<std::uint64_t>(slot) << (kScoreboardPartialBits + 1)) |
         ((static_cast<std::uint64_t>(partial) & mask) << 1) | (valid ? 1u : 0u);
}

UnpackedEntry unpack_entry(std::uint64_t word) {
  const std::uint64_t mask = (std::uint64_t{1} << kScoreboardPartialBits) - 1;
  std::uint64_t raw = (word >> 1) & mask;
  // sign-extend from 38 bits
  if (raw >> (kScoreboardPartialBits - 1)) raw |= ~mask;
  return {static_cast<std::uint32_t>(word >> (kScoreboardPartialBits + 1)) &
              ((1u << kScoreboardTagBits) - 1),
          static_cast<std::int64_t>(raw), (word & 1u) != 0};
}

Scoreboard::Scoreboard(std::size_t capacity) : slots_(capacity) {}

std::optional<std::size_t> Scoreboard::find(std::size_t token) const {
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (slots_[s].valid && slots_[s].token == token) return s;
  }
  return std::nullopt;
}

std::size_t Scoreboard::insert(std::size_t token, std::int64_t partial, int round) {
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (!slots_[s].valid) {
      slots_[s] = {token, partial, round, true};
      ++live_;
      return s;
    }
  }
  throw std::logic_error("scoreboard overflow");
}

void Scoreboard::update(std::size_t slot, std::int64_t partial, int round) {
  auto& e = slots_.at(slot);
  if (!e.valid) throw std::logic_error("update of an invalid scoreboard entry");
  e.partial = partial;
  e.last_round = round;
}

void Scoreboard::erase(std::size_t slot) {
  auto& e = slots_.at(slot);
  if (!e.valid) throw std::logic_error("erase of an invalid scoreboard entry");
  e = {};
  --live_;
}

std::uint64_t Scoreboard::packed(std::size_t slot) const {
  const auto& e = slots_.at(slot);
  return pack_entry(static_cast<std::uint32_t>(slot), e.partial, e.valid);
}

}  // namespace bsattn::sim
