#include "bsattn/margin.hpp"

#include "bsattn/quantize.hpp"

namespace bsattn {

void check_accumulator_width(std::size_t head_dim, int bits) {
  validate_bits(bits);
  // H * 2^(2(N-1)) < 2^62  <=>  H < 2^(62 - 2(N-1))
  const int magnitude_bits = 2 * (bits - 1);
  const auto limit = std::uint64_t{1} << (62 - magnitude_bits);
  if (head_dim == 0 || head_dim >= limit) {
    throw WidthError("head_dim " + std::to_string(head_dim) + " with " + std::to_string(bits) +
                     "-bit operands can overflow the 64-bit score accumulator");
  }
}

std::int64_t plane_weight(int round, int bits) {
  if (round < 0 || round >= bits) {
    throw std::out_of_range("round " + std::to_string(round) + " outside [0, " +
                            std::to_string(bits - 1) + "]");
  }
  if (round == 0) return -(std::int64_t{1} << (bits - 1));
  return std::int64_t{1} << (bits - 1 - round);
}

std::int64_t remaining_mass(int round, int bits) {
  if (round < 0 || round >= bits) {
    throw std::out_of_range("round " + std::to_string(round) + " outside [0, " +
                            std::to_string(bits - 1) + "]");
  }
  return (std::int64_t{1} << (bits - 1 - round)) - 1;
}

const MarginPair& MarginTable::at(int round) const {
  if (round < 0 || static_cast<std::size_t>(round) >= pairs.size()) {
    throw std::out_of_range("margin table has no round " + std::to_string(round));
  }
  return pairs[static_cast<std::size_t>(round)];
}

MarginTable build_margin_table(std::span<const std::int32_t> query, int bits,
                               std::size_t query_index) {
  check_accumulator_width(query.size(), bits);
  std::int64_t pos = 0;
  std::int64_t neg = 0;
  for (auto x : query) {
    if (x > 0) pos += x;
    else neg += x;
  }
  MarginTable table;
  table.query = query_index;
  table.bits = bits;
  table.pairs.reserve(static_cast<std::size_t>(bits));
  for (int r = 0; r < bits; ++r) {
    const auto f = remaining_mass(r, bits);
    table.pairs.push_back({r, f * neg, f * pos});
  }
  return table;
}

ScoreInterval score_bounds(std::int64_t partial, const MarginTable& table, int round) {
  const auto& m = table.at(round);
  return {partial + m.m_min, partial + m.m_max};
}

}  // namespace bsattn
