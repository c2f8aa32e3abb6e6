#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsattn/besf.hpp"
#include "bsattn/sim/config.hpp"
#include "bsattn/synthetic.hpp"

namespace bsattn::metrics {

inline constexpr int kSchemaVersion = 1;

struct ComplexityReport {
  std::uint64_t bitplane_fetches_sparse = 0;
  std::uint64_t bitplane_fetches_dense = 0;
  double io_reduction = 1.0;
  std::uint64_t mac_ops_sparse = 0;  // ANDer-tree passes + V-PU row passes
  std::uint64_t mac_ops_dense = 0;
  double compute_reduction = 1.0;
};

/// Sums over all traces. Dense reference is S * N fetches per query.
ComplexityReport complexity_report(std::span<const PruneTrace> traces, std::size_t num_keys,
                                   int bits, std::size_t head_dim,
                                   std::size_t macs_per_cycle = 64);

struct AccuracyReport {
  double max_abs_err = 0.0;
  double mean_rel_err = 0.0;  // mean over rows of |o - d|_2 / max(|d|_2, 1e-12)
  std::size_t recall_k = 0;
  double survivor_recall = 1.0;  // mean over queries
  double pruned_mass = 0.0;       // worst query
  double pruned_mass_mean = 0.0;
  double pruned_mass_bound = 1.0;  // min(1, pruned count * exp(-gap)) for the worst query
  bool tail_bound_holds = true;    // mass < bound on every query that pruned anything
};

/// `exact` is the integer score matrix, `logit_scale` = s_q * s_k / sqrt(H),
/// `gap_logits` = alpha * radius.
AccuracyReport accuracy_report(const RowMatrix<double>& besf_out,
                               const RowMatrix<double>& dense_out,
                               std::span<const PruneTrace> traces,
                               const RowMatrix<std::int64_t>& exact, double logit_scale,
                               double gap_logits, std::size_t recall_k);

struct SweepRow {
  double alpha = 0.0;
  double io_reduction = 1.0;
  double compute_reduction = 1.0;
  double max_abs_err = 0.0;
  double pruned_mass = 0.0;
  std::optional<double> speedup;  // dense cycles / besf_bap cycles, when simulated
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ascending alpha
};

std::vector<double> default_alphas();

struct SweepOptions {
  int bits = 12;
  PruneConfig prune;                      // alpha overridden per point
  std::size_t recall_k = 1;
  std::optional<sim::SimConfig> sim;      // when set, also simulate and report speedup
  std::size_t jobs = 1;
};

SweepResult sweep_alpha(const Workload& workload, std::vector<double> alphas,
                        const SweepOptions& opts);

enum class Format { kJson, kCsv };

std::string to_json_text(const ComplexityReport& r);
std::string to_json_text(const AccuracyReport& r);
std::string to_json_text(const SweepResult& r);
std::string to_csv_text(const ComplexityReport& r);
std::string to_csv_text(const AccuracyReport& r);
std::string to_csv_text(const SweepResult& r);

/// Writes the report in the requested format; throws std::runtime_error on
/// I/O failure.
template <typename Report>
void emit(const Report& report, Format format, const std::filesystem::path& path);

}  // namespace bsattn::metrics
