#pragma once

// Brute-force references. These are plain loops on purpose and must not call
// into the pruning or scoring code they are used to check.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bsattn/besf.hpp"
#include "bsattn/bitplanes.hpp"
#include "bsattn/margin.hpp"
#include "bsattn/quantize.hpp"

namespace bsattn::oracle {

struct Violation {
  std::string kind;  // "bound", "nesting", "lsb", "soundness", "tail"
  std::size_t query = 0;
  std::size_t key = 0;
  int round = 0;
  std::int64_t lb = 0;
  std::int64_t ub = 0;
  std::int64_t exact = 0;
};

struct ViolationReport {
  std::uint64_t cases = 0;
  std::vector<Violation> violations;

  bool passed() const { return violations.empty(); }
  void merge(const ViolationReport& other);
};

/// Textbook softmax(QK^T / sqrt(H)) V in double precision.
RowMatrix<double> dense_attention_f32(const TensorF32& q, const TensorF32& k, const TensorF32& v);

/// Exact integer QK^T.
RowMatrix<std::int64_t> exact_scores(const QuantizedMatrix& q, const QuantizedMatrix& k);

/// Dense softmax over one row of integer scores in logit units.
Vector<double> dense_softmax_row(std::span<const std::int64_t> scores, double logit_scale);

/// softmax(A * s_q * s_k / sqrt(H)) V with exact integer A and real V.
RowMatrix<double> dense_attention_quant(const QuantizedMatrix& q, const QuantizedMatrix& k,
                                        const TensorF32& v);

/// Scalar Eq.-4 style reassembly of key j from its bits.
std::int64_t key_value(const BitPlaneStore& keys, std::size_t key, std::size_t h);

using MarginBuilder =
    std::function<MarginTable(std::span<const std::int32_t>, int, std::size_t)>;

/// For every (query, key, round): exact in [lb, ub], intervals nested from
/// round to round, and lb = ub = exact at the LSB. Partials are summed from
/// the raw bits here; only the margin table comes from `margins`.
ViolationReport verify_bounds(const QuantizedMatrix& q, const BitPlaneStore& keys,
                              const MarginBuilder& margins = build_margin_table);

/// Flags any evicted key with exact > max exact - R_int.
ViolationReport check_prune_soundness(const PruneTrace& trace,
                                      std::span<const std::int64_t> exact_row);

/// Flags any evicted key whose dense-softmax probability is not strictly
/// below exp(-gap_logits).
ViolationReport check_tail_bound(const PruneTrace& trace, std::span<const std::int64_t> exact_row,
                                 double logit_scale, double gap_logits);

/// Fraction of the exact top-k keys (ties to the lower index) that are final
/// survivors.
double survivor_recall(const PruneTrace& trace, std::span<const std::int64_t> exact_row,
                       std::size_t k);

/// Indices of the exact top-k keys, ties broken by lower index.
std::vector<std::size_t> top_k(std::span<const std::int64_t> exact_row, std::size_t k);

}  // namespace bsattn::oracle
