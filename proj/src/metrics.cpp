#include "bsattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "bsattn/oracle.hpp"
#include "bsattn/sim/simulator.hpp"

namespace bsattn::metrics {
namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ComplexityReport complexity_report(std::span<const PruneTrace> traces, std::size_t num_keys,
                                   int bits, std::size_t head_dim, std::size_t macs_per_cycle) {
  const std::uint64_t per_row = (head_dim + macs_per_cycle - 1) / macs_per_cycle;
  ComplexityReport r;
  for (const auto& t : traces) {
    if (t.num_keys != num_keys || t.bits != bits) {
      throw std::invalid_argument("trace shape does not match report parameters");
    }
    if (!t.is_complete()) {
      throw std::invalid_argument("trace for query " + std::to_string(t.query) + " is incomplete");
    }
    const std::uint64_t fetches = t.bitplane_fetches();
    const std::uint64_t survivors = t.final_survivors().size();
    r.bitplane_fetches_sparse += fetches;
    r.bitplane_fetches_dense += static_cast<std::uint64_t>(num_keys) * static_cast<std::uint64_t>(bits);
    r.mac_ops_sparse += fetches + survivors * per_row;
    r.mac_ops_dense += static_cast<std::uint64_t>(num_keys) * (static_cast<std::uint64_t>(bits) + per_row);
  }
  r.io_reduction = ratio(r.bitplane_fetches_dense, r.bitplane_fetches_sparse);
  r.compute_reduction = ratio(r.mac_ops_dense, r.mac_ops_sparse);
  return r;
}

AccuracyReport accuracy_report(const RowMatrix<double>& besf_out,
                               const RowMatrix<double>& dense_out,
                               std::span<const PruneTrace> traces,
                               const RowMatrix<std::int64_t>& exact, double logit_scale,
                               double gap_logits, std::size_t recall_k) {
  if (besf_out.rows() != dense_out.rows() || besf_out.cols() != dense_out.cols()) {
    throw std::invalid_argument("output shapes differ");
  }
  if (traces.size() != static_cast<std::size_t>(exact.rows())) {
    throw std::invalid_argument("trace count does not match score rows");
  }
  AccuracyReport r;
  r.recall_k = recall_k;
  r.max_abs_err = besf_out.rows() == 0 ? 0.0 : (besf_out - dense_out).cwiseAbs().maxCoeff();
  double rel = 0.0;
  for (Eigen::Index i = 0; i < besf_out.rows(); ++i) {
    rel += (besf_out.row(i) - dense_out.row(i)).norm() / std::max(dense_out.row(i).norm(), 1e-12);
  }
  r.mean_rel_err = besf_out.rows() == 0 ? 0.0 : rel / static_cast<double>(besf_out.rows());

  const double per_key = std::exp(-gap_logits);
  double recall = 0.0;
  double mass_sum = 0.0;
  r.pruned_mass_bound = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Vector<std::int64_t> row = exact.row(static_cast<Eigen::Index>(i)).transpose();
    const std::span<const std::int64_t> srow(row.data(), static_cast<std::size_t>(row.size()));
    recall += oracle::survivor_recall(traces[i], srow, recall_k);
    const auto p = oracle::dense_softmax_row(srow, logit_scale);
    // summed in key order so equal pruned sets give bit-equal masses
    std::vector<std::size_t> evicted;
    for (const auto& e : traces[i].events) {
      if (e.action == TraceAction::kEvict) evicted.push_back(e.key);
    }
    std::sort(evicted.begin(), evicted.end());
    double mass = 0.0;
    for (auto j : evicted) mass += p[static_cast<Eigen::Index>(j)];
    const std::size_t pruned = evicted.size();
    const double bound = std::min(1.0, static_cast<double>(pruned) * per_key);
    if (pruned > 0 && !(mass < bound)) r.tail_bound_holds = false;
    mass_sum += mass;
    if (i == 0 || mass > r.pruned_mass) {
      r.pruned_mass = mass;
      r.pruned_mass_bound = bound;
    }
  }
  if (!traces.empty()) {
    r.survivor_recall = recall / static_cast<double>(traces.size());
    r.pruned_mass_mean = mass_sum / static_cast<double>(traces.size());
  }
  return r;
}

std::vector<double> default_alphas() {
  std::vector<double> a;
  for (int i = 2; i <= 8; ++i) a.push_back(i / 10.0);
  return a;
}

SweepResult sweep_alpha(const Workload& w, std::vector<double> alphas, const SweepOptions& opts) {
  if (alphas.empty()) throw std::invalid_argument("alpha list is empty");
  for (auto a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("alpha outside [0, 1]");
  }
  std::sort(alphas.begin(), alphas.end());

  const auto dense_f32 = oracle::dense_attention_f32(w.q, w.k, w.v);
  const auto num_keys = static_cast<std::size_t>(w.k.rows());
  const auto head_dim = static_cast<std::size_t>(w.k.cols());
  std::optional<std::uint64_t> dense_cycles;
  if (opts.sim) dense_cycles = sim::run_dense_baseline(*opts.sim, w.q, w.k, w.v).total_cycles;

  auto point = [&](double alpha) {
    PruneConfig cfg = opts.prune;
    cfg.alpha = alpha;
    const auto res = besf_attention(w.q, w.k, w.v, opts.bits, cfg);
    const auto exact = oracle::exact_scores(res.q, res.k);
    const double logit_scale =
        res.q.params.scale * res.k.params.scale / std::sqrt(static_cast<double>(head_dim));
    const auto cx = complexity_report(res.traces, num_keys, opts.bits, head_dim);
    const auto acc = accuracy_report(res.output.rows, dense_f32, res.traces, exact, logit_scale,
                                     alpha * cfg.radius, std::min(opts.recall_k, num_keys));
    SweepRow row;
    row.alpha = alpha;
    row.io_reduction = cx.io_reduction;
    row.compute_reduction = cx.compute_reduction;
    row.max_abs_err = acc.max_abs_err;
    row.pruned_mass = acc.pruned_mass;
    if (opts.sim) {
      auto sc = *opts.sim;
      sc.mode = sim::SimMode::kBesfBap;
      sc.prune = cfg;
      const auto cycles = sim::run_sim(sc, w.q, w.k, w.v).stats.total_cycles;
      row.speedup = static_cast<double>(*dense_cycles) / static_cast<double>(cycles);
    }
    return row;
  };

  SweepResult result;
  result.rows.resize(alphas.size());
  const std::size_t jobs = std::max<std::size_t>(1, opts.jobs);
  for (std::size_t begin = 0; begin < alphas.size(); begin += jobs) {
    const auto end = std::min(alphas.size(), begin + jobs);
    std::vector<std::future<SweepRow>> batch;
    for (auto i = begin; i < end; ++i) batch.push_back(std::async(std::launch::async, point, alphas[i]));
    for (auto i = begin; i < end; ++i) result.rows[i] = batch[i - begin].get();
  }
  return result;
}

std::string to_json_text(const ComplexityReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["bitplane_fetches_sparse"] = r.bitplane_fetches_sparse;
  j["bitplane_fetches_dense"] = r.bitplane_fetches_dense;
  j["io_reduction"] = r.io_reduction;
  j["mac_ops_sparse"] = r.mac_ops_sparse;
  j["mac_ops_dense"] = r.mac_ops_dense;
  j["compute_reduction"] = r.compute_reduction;
  return j.dump(2) + "\n";
}

std::string to_json_text(const AccuracyReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["max_abs_err"] = r.max_abs_err;
  j["mean_rel_err"] = r.mean_rel_err;
  j["recall_k"] = r.recall_k;
  j["survivor_recall"] = r.survivor_recall;
  j["pruned_mass"] = r.pruned_mass;
  j["pruned_mass_mean"] = r.pruned_mass_mean;
  j["pruned_mass_bound"] = r.pruned_mass_bound;
  j["tail_bound_holds"] = r.tail_bound_holds;
  return j.dump(2) + "\n";
}

std::string to_json_text(const SweepResult& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json o;
    o["alpha"] = row.alpha;
    o["io_reduction"] = row.io_reduction;
    o["compute_reduction"] = row.compute_reduction;
    o["max_abs_err"] = row.max_abs_err;
    o["pruned_mass"] = row.pruned_mass;
    o["speedup"] = row.speedup ? nlohmann::ordered_json(*row.speedup) : nlohmann::ordered_json();
    j["rows"].push_back(o);
  }
  return j.dump(2) + "\n";
}

std::string to_csv_text(const ComplexityReport& r) {
  std::ostringstream os;
  os << "schema_version,bitplane_fetches_sparse,bitplane_fetches_dense,io_reduction,"
        "mac_ops_sparse,mac_ops_dense,compute_reduction\n";
  os << kSchemaVersion << ',' << r.bitplane_fetches_sparse << ',' << r.bitplane_fetches_dense << ','
     << fmt(r.io_reduction) << ',' << r.mac_ops_sparse << ',' << r.mac_ops_dense << ','
     << fmt(r.compute_reduction) << '\n';
  return os.str();
}

std::string to_csv_text(const AccuracyReport& r) {
  std::ostringstream os;
  os << "schema_version,max_abs_err,mean_rel_err,recall_k,survivor_recall,pruned_mass,"
        "pruned_mass_mean,pruned_mass_bound,tail_bound_holds\n";
  os << kSchemaVersion << ',' << fmt(r.max_abs_err) << ',' << fmt(r.mean_rel_err) << ','
     << r.recall_k << ',' << fmt(r.survivor_recall) << ',' << fmt(r.pruned_mass) << ','
     << fmt(r.pruned_mass_mean) << ',' << fmt(r.pruned_mass_bound) << ','
     << (r.tail_bound_holds ? "true" : "false") << '\n';
  return os.str();
}

std::string to_csv_text(const SweepResult& r) {
  std::ostringstream os;
  os << "schema_version,alpha,io_reduction,compute_reduction,max_abs_err,pruned_mass,speedup\n";
  for (const auto& row : r.rows) {
    os << kSchemaVersion << ',' << fmt(row.alpha) << ',' << fmt(row.io_reduction) << ','
       << fmt(row.compute_reduction) << ',' << fmt(row.max_abs_err) << ',' << fmt(row.pruned_mass)
       << ',' << (row.speedup ? fmt(*row.speedup) : std::string()) << '\n';
  }
  return os.str();
}

template <typename Report>
void emit(const Report& report, Format format, const std::filesystem::path& path) {
  const auto text = format == Format::kJson ? to_json_text(report) : to_csv_text(report);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

template void emit(const ComplexityReport&, Format, const std::filesystem::path&);
template void emit(const AccuracyReport&, Format, const std::filesystem::path&);
template void emit(const SweepResult&, Format, const std::filesystem::path&);

}  // namespace bsattn::metrics
