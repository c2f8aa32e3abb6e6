#include "bsattn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bsattn::oracle {

void ViolationReport::merge(const ViolationReport& other) {
  cases += other.cases;
  violations.insert(violations.end(), other.violations.begin(), other.violations.end());
}

namespace {

RowMatrix<double> softmax_times_v(const RowMatrix<double>& logits, const TensorF32& v) {
  const auto vm = v.matrix();
  RowMatrix<double> out = RowMatrix<double>::Zero(logits.rows(), vm.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    std::vector<double> e(static_cast<std::size_t>(logits.cols()));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      e[static_cast<std::size_t>(j)] = std::exp(logits(i, j) - mx);
      sum += e[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double p = e[static_cast<std::size_t>(j)] / sum;
      for (Eigen::Index h = 0; h < vm.cols(); ++h) out(i, h) += p * static_cast<double>(vm(j, h));
    }
  }
  return out;
}

void check_shapes(const TensorF32& q, const TensorF32& k, const TensorF32& v) {
  if (q.cols() != k.cols() || v.rows() != k.rows()) {
    throw std::invalid_argument("attention operand shapes are incompatible");
  }
}

}  // namespace

RowMatrix<double> dense_attention_f32(const TensorF32& q, const TensorF32& k, const TensorF32& v) {
  check_shapes(q, k, v);
  const auto qm = q.matrix();
  const auto km = k.matrix();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  RowMatrix<double> logits(qm.rows(), km.rows());
  for (Eigen::Index i = 0; i < qm.rows(); ++i) {
    for (Eigen::Index j = 0; j < km.rows(); ++j) {
      double acc = 0.0;
      for (Eigen::Index h = 0; h < qm.cols(); ++h) {
        acc += static_cast<double>(qm(i, h)) * static_cast<double>(km(j, h));
      }
      logits(i, j) = acc * inv_sqrt;
    }
  }
  return softmax_times_v(logits, v);
}

RowMatrix<std::int64_t> exact_scores(const QuantizedMatrix& q, const QuantizedMatrix& k) {
  if (q.cols() != k.cols()) throw std::invalid_argument("Q and K head dims differ");
  check_accumulator_width(static_cast<std::size_t>(q.cols()),
                          std::max(q.params.bits, k.params.bits));
  RowMatrix<std::int64_t> a(q.rows(), k.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      std::int64_t acc = 0;
      for (Eigen::Index h = 0; h < q.cols(); ++h) {
        acc += static_cast<std::int64_t>(q.values(i, h)) * k.values(j, h);
      }
      a(i, j) = acc;
    }
  }
  return a;
}

Vector<double> dense_softmax_row(std::span<const std::int64_t> scores, double logit_scale) {
  if (scores.empty()) throw std::invalid_argument("softmax over an empty row");
  double mx = -INFINITY;
  for (auto a : scores) mx = std::max(mx, static_cast<double>(a) * logit_scale);
  Vector<double> p(static_cast<Eigen::Index>(scores.size()));
  double sum = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    p[static_cast<Eigen::Index>(j)] = std::exp(static_cast<double>(scores[j]) * logit_scale - mx);
    sum += p[static_cast<Eigen::Index>(j)];
  }
  return p / sum;
}

RowMatrix<double> dense_attention_quant(const QuantizedMatrix& q, const QuantizedMatrix& k,
                                        const TensorF32& v) {
  if (v.rows() != k.rows()) throw std::invalid_argument("V and K row counts differ");
  const auto a = exact_scores(q, k);
  const double scale =
      q.params.scale * k.params.scale / std::sqrt(static_cast<double>(k.cols()));
  RowMatrix<double> logits = a.cast<double>() * scale;
  return softmax_times_v(logits, v);
}

std::int64_t key_value(const BitPlaneStore& keys, std::size_t key, std::size_t h) {
  const int n = keys.bits();
  std::int64_t x = 0;
  for (int r = 0; r < n; ++r) {
    if (!keys.bit(key, r, h)) continue;
    const int pos = n - 1 - r;
    x += (r == 0) ? -(std::int64_t{1} << pos) : (std::int64_t{1} << pos);
  }
  return x;
}

ViolationReport verify_bounds(const QuantizedMatrix& q, const BitPlaneStore& keys,
                              const MarginBuilder& margins) {
  if (static_cast<std::size_t>(q.cols()) != keys.head_dim()) {
    throw std::invalid_argument("Q head dim does not match key store");
  }
  const int n = keys.bits();
  const auto head_dim = keys.head_dim();
  ViolationReport report;
  std::vector<std::int32_t> row(head_dim);
  std::vector<std::int64_t> kv(head_dim);

  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (std::size_t h = 0; h < head_dim; ++h) row[h] = q.values(i, static_cast<Eigen::Index>(h));
    const auto table = margins(row, n, static_cast<std::size_t>(i));

    for (std::size_t j = 0; j < keys.num_keys(); ++j) {
      std::int64_t exact = 0;
      for (std::size_t h = 0; h < head_dim; ++h) {
        kv[h] = key_value(keys, j, h);
        exact += row[h] * kv[h];
      }
      std::int64_t partial = 0;
      std::int64_t prev_lb = 0;
      std::int64_t prev_ub = 0;
      for (int r = 0; r < n; ++r) {
        std::int64_t dot = 0;
        for (std::size_t h = 0; h < head_dim; ++h) {
          if (keys.bit(j, r, h)) dot += row[h];
        }
        const int pos = n - 1 - r;
        partial += (r == 0 ? -(std::int64_t{1} << pos) : (std::int64_t{1} << pos)) * dot;
        const auto& m = table.at(r);
        const std::int64_t lb = partial + m.m_min;
        const std::int64_t ub = partial + m.m_max;
        ++report.cases;
        auto flag = [&](const char* kind) {
          report.violations.push_back({kind, static_cast<std::size_t>(i), j, r, lb, ub, exact});
        };
        if (exact < lb || exact > ub) flag("bound");
        if (r > 0 && (lb < prev_lb || ub > prev_ub)) flag("nesting");
        if (r == n - 1 && (lb != exact || ub != exact)) flag("lsb");
        prev_lb = lb;
        prev_ub = ub;
      }
    }
  }
  return report;
}

ViolationReport check_prune_soundness(const PruneTrace& trace,
                                      std::span<const std::int64_t> exact_row) {
  if (exact_row.size() != trace.num_keys) {
    throw std::invalid_argument("exact score row does not match trace key count");
  }
  ViolationReport report;
  const auto max_exact = *std::max_element(exact_row.begin(), exact_row.end());
  for (const auto& e : trace.events) {
    if (e.action != TraceAction::kEvict) continue;
    if (e.key >= exact_row.size()) throw std::out_of_range("trace key out of range");
    ++report.cases;
    if (exact_row[e.key] > max_exact - trace.gap) {
      report.violations.push_back(
          {"soundness", trace.query, e.key, e.round, e.lb, e.ub, exact_row[e.key]});
    }
  }
  return report;
}

ViolationReport check_tail_bound(const PruneTrace& trace, std::span<const std::int64_t> exact_row,
                                 double logit_scale, double gap_logits) {
  if (exact_row.size() != trace.num_keys) {
    throw std::invalid_argument("exact score row does not match trace key count");
  }
  ViolationReport report;
  const auto p = dense_softmax_row(exact_row, logit_scale);
  const double bound = std::exp(-gap_logits);
  for (const auto& e : trace.events) {
    if (e.action != TraceAction::kEvict) continue;
    ++report.cases;
    if (!(p[static_cast<Eigen::Index>(e.key)] < bound)) {
      report.violations.push_back(
          {"tail", trace.query, e.key, e.round, e.lb, e.ub, exact_row[e.key]});
    }
  }
  return report;
}

std::vector<std::size_t> top_k(std::span<const std::int64_t> exact_row, std::size_t k) {
  if (k > exact_row.size()) throw std::invalid_argument("k exceeds key count");
  std::vector<std::size_t> idx(exact_row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return exact_row[a] > exact_row[b]; });
  idx.resize(k);
  return idx;
}

double survivor_recall(const PruneTrace& trace, std::span<const std::int64_t> exact_row,
                       std::size_t k) {
  if (k == 0) return 1.0;
  const auto top = top_k(exact_row, k);
  const auto survivors = trace.final_survivors();
  std::size_t hit = 0;
  for (auto j : top) {
    if (std::binary_search(survivors.begin(), survivors.end(), j)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(k);
}

}  // namespace bsattn::oracle
