#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsattn/bitplanes.hpp"
#include "bsattn/margin.hpp"
#include "bsattn/quantize.hpp"

namespace bsattn {

enum class KeepRule { kGte, kStrictGt };

/// Units `radius` is expressed in. kLogit is the softmax-logit domain and is
/// converted to integer score units through the Q/K scales; kInteger takes
/// alpha * radius directly as an integer score gap.
enum class RadiusUnits { kLogit, kInteger };

struct PruneConfig {
  double alpha = 0.6;
  double radius = 5.0;
  bool prune_enabled = true;
  KeepRule keep_rule = KeepRule::kGte;
  RadiusUnits radius_units = RadiusUnits::kLogit;

  void validate() const;
};

/// Pruning predicate shared by the golden model and the simulator's lanes.
inline bool keep_token(std::int64_t upper_bound, std::int64_t eta, KeepRule rule) {
  return rule == KeepRule::kGte ? upper_bound >= eta : upper_bound > eta;
}

std::int64_t partial_delta(std::span<const std::int32_t> query,
                           std::span<const std::uint64_t> plane, int round, int bits);

/// ceil(alpha * radius * sqrt(d_h) / (s_q * s_k)). Values within 1e-9
/// (relative) of an integer snap to it before the ceiling so decimal inputs
/// such as 0.6 do not round up by a whole step.
std::int64_t radius_to_integer(double radius, double alpha, std::size_t head_dim,
                               double scale_q, double scale_k);

/// R_int for a given config and quantization.
std::int64_t threshold_gap(const PruneConfig& cfg, std::size_t head_dim, double scale_q,
                           double scale_k);

/// max(lower_bounds) - R_int.
std::int64_t lats_threshold(std::span<const std::int64_t> lower_bounds, std::int64_t gap);

enum class TraceAction { kKeep, kEvict, kFinal };

const char* to_string(TraceAction a);
std::optional<TraceAction> parse_trace_action(const std::string& s);

struct TraceEvent {
  std::size_t query = 0;
  std::size_t key = 0;
  int round = 0;
  std::int64_t lb = 0;
  std::int64_t ub = 0;
  std::int64_t eta = 0;
  TraceAction action = TraceAction::kKeep;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct RoundState {
  int round = 0;
  std::vector<std::size_t> survivors;    // ascending key indices
  std::vector<std::int64_t> partials;    // parallel to survivors
  std::int64_t eta = 0;
};

/// Auditable record of one query's pruning. `rounds` is only filled by the
/// round-synchronous golden model; asynchronous schedules leave it empty and
/// record their decisions as events in simulated-time order.
struct PruneTrace {
  std::size_t query = 0;
  std::size_t num_keys = 0;
  int bits = 0;
  std::int64_t gap = 0;  // R_int
  std::vector<RoundState> rounds;
  std::vector<TraceEvent> events;

  std::vector<std::size_t> final_survivors() const;
  std::vector<TraceEvent> evictions() const;

  /// Last round at which each key was scored (eviction round, or N-1 for
  /// final survivors). Throws if a key was never scored.
  std::vector<int> last_rounds() const;

  std::size_t bitplane_fetches() const;

  /// Every key is either a final survivor or has exactly one eviction.
  bool is_complete() const;
};

struct SparseScores {
  std::size_t query = 0;
  std::vector<std::pair<std::size_t, std::int64_t>> entries;  // ascending key index
};

struct BesfQueryResult {
  SparseScores scores;
  PruneTrace trace;
};

/// Round-synchronous BESF for one query row: at round r every survivor adds
/// its plane-r contribution, eta is the max lower bound minus `gap`, and keys
/// failing the keep rule are evicted for good.
BesfQueryResult besf_query(std::span<const std::int32_t> query, const BitPlaneStore& keys,
                           const PruneConfig& cfg, std::int64_t gap, std::size_t query_index = 0);

/// Exact scores of the listed keys, rebuilt by summing partial_delta over all
/// planes. The simulator uses this to score its own survivor sets.
SparseScores score_survivors(std::span<const std::int32_t> query, const BitPlaneStore& keys,
                             std::span<const std::size_t> survivors, std::size_t query_index = 0);

/// Softmax restricted to survivors; pruned keys get exactly 0.
Vector<double> sparse_softmax(const SparseScores& scores, std::size_t num_keys,
                              std::size_t head_dim, double scale_q, double scale_k);

/// sum_j p_j * V_j over the nonzero entries of `probs`.
Vector<double> sparse_sv(const Vector<double>& probs, const TensorF32& values);

struct AttentionOutput {
  RowMatrix<double> rows;
  std::vector<std::size_t> survivor_counts;
};

struct BesfResult {
  AttentionOutput output;
  std::vector<PruneTrace> traces;
  std::vector<SparseScores> scores;
  QuantizedMatrix q;
  QuantizedMatrix k;
  std::int64_t gap = 0;
};

/// Shape checks for (S_q x H, S x H, S x H) attention operands.
void check_attention_shapes(const TensorF32& q, const TensorF32& k, const TensorF32& v);

/// Quantize Q and K, run besf_query per row, then sparse softmax and S x V
/// in real arithmetic.
BesfResult besf_attention(const TensorF32& q, const TensorF32& k, const TensorF32& v, int bits,
                          const PruneConfig& cfg);

}  // namespace bsattn
