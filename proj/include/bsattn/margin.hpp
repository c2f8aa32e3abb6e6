#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsattn {

class WidthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rejects (H, N) when H * 2^(2(N-1)) >= 2^62, i.e. when an exact score could
/// leave the 64-bit accumulator's safe range.
void check_accumulator_width(std::size_t head_dim, int bits);

/// Weight of plane r in the two's-complement expansion: -2^(N-1) for the
/// sign plane, 2^(N-1-r) otherwise.
std::int64_t plane_weight(int round, int bits);

/// Sum of the weights of planes r+1 .. N-1, i.e. 2^(N-1-r) - 1.
std::int64_t remaining_mass(int round, int bits);

struct MarginPair {
  int round = 0;
  std::int64_t m_min = 0;
  std::int64_t m_max = 0;
};

/// Per-query margins for every round. Depends only on the query, never on K,
/// so it is built once before any key plane is fetched.
struct MarginTable {
  std::size_t query = 0;
  int bits = 0;
  std::vector<MarginPair> pairs;  // indexed by round

  const MarginPair& at(int round) const;
};

struct ScoreInterval {
  std::int64_t lb = 0;
  std::int64_t ub = 0;

  bool contains(std::int64_t x) const { return lb <= x && x <= ub; }
};

/// For a positive q_h the unknown key bits are all 1 at the upper extreme and
/// all 0 at the lower one; negative q_h swaps that. Both extremes scale with
/// remaining_mass(r), so the table is remaining_mass * (sum of positive q,
/// sum of negative q).
MarginTable build_margin_table(std::span<const std::int32_t> query, int bits,
                               std::size_t query_index = 0);

/// [partial + m_min(r), partial + m_max(r)].
ScoreInterval score_bounds(std::int64_t partial, const MarginTable& table, int round);

}  // namespace bsattn
