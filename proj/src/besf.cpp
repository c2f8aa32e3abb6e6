#include "bsattn/besf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace bsattn {

void PruneConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(radius >= 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("radius must be finite and >= 0");
  }
}

std::int64_t partial_delta(std::span<const std::int32_t> query,
                           std::span<const std::uint64_t> plane, int round, int bits) {
  if (plane.size() != (query.size() + 63) / 64) {
    throw std::invalid_argument("plane holds " + std::to_string(plane.size()) +
                                " words but the query needs " +
                                std::to_string((query.size() + 63) / 64));
  }
  std::int64_t acc = 0;
  for (std::size_t w = 0; w < plane.size(); ++w) {
    auto word = plane[w];
    while (word != 0) {
      const auto h = w * 64 + static_cast<std::size_t>(std::countr_zero(word));
      if (h >= query.size()) throw std::invalid_argument("plane has bits beyond head_dim");
      acc += query[h];
      word &= word - 1;
    }
  }
  return plane_weight(round, bits) * acc;
}

std::int64_t radius_to_integer(double radius, double alpha, std::size_t head_dim, double scale_q,
                               double scale_k) {
  if (!(scale_q > 0.0) || !(scale_k > 0.0)) {
    throw std::invalid_argument("quantization scales must be positive");
  }
  const long double x = static_cast<long double>(alpha) * radius *
                        std::sqrt(static_cast<long double>(head_dim)) /
                        (static_cast<long double>(scale_q) * scale_k);
  if (!std::isfinite(static_cast<double>(x)) || x > 4.0e18L) {
    throw std::invalid_argument("integer radius overflows 64 bits");
  }
  const long double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9L * std::max<long double>(1.0L, std::abs(x))) {
    return static_cast<std::int64_t>(nearest);
  }
  return static_cast<std::int64_t>(std::ceil(x));
}

std::int64_t threshold_gap(const PruneConfig& cfg, std::size_t head_dim, double scale_q,
                           double scale_k) {
  cfg.validate();
  if (cfg.radius_units == RadiusUnits::kInteger) {
    return radius_to_integer(cfg.radius, cfg.alpha, 1, 1.0, 1.0);
  }
  return radius_to_integer(cfg.radius, cfg.alpha, head_dim, scale_q, scale_k);
}

std::int64_t lats_threshold(std::span<const std::int64_t> lower_bounds, std::int64_t gap) {
  if (lower_bounds.empty()) throw std::invalid_argument("threshold needs at least one survivor");
  return *std::max_element(lower_bounds.begin(), lower_bounds.end()) - gap;
}

const char* to_string(TraceAction a) {
  switch (a) {
    case TraceAction::kKeep: return "keep";
    case TraceAction::kEvict: return "evict";
    case TraceAction::kFinal: return "final";
  }
  return "?";
}

std::optional<TraceAction> parse_trace_action(const std::string& s) {
  if (s == "keep") return TraceAction::kKeep;
  if (s == "evict") return TraceAction::kEvict;
  if (s == "final") return TraceAction::kFinal;
  return std::nullopt;
}

std::vector<std::size_t> PruneTrace::final_survivors() const {
  std::vector<std::size_t> out;
  for (const auto& e : events) {
    if (e.action == TraceAction::kFinal) out.push_back(e.key);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<TraceEvent> PruneTrace::evictions() const {
  std::vector<TraceEvent> out;
  for (const auto& e : events) {
    if (e.action == TraceAction::kEvict) out.push_back(e);
  }
  return out;
}

std::vector<int> PruneTrace::last_rounds() const {
  std::vector<int> last(num_keys, -1);
  for (const auto& e : events) {
    if (e.key >= num_keys) throw std::out_of_range("trace event key out of range");
    last[e.key] = std::max(last[e.key], e.round);
  }
  for (std::size_t j = 0; j < num_keys; ++j) {
    if (last[j] < 0) throw std::invalid_argument("key " + std::to_string(j) + " never scored");
  }
  return last;
}

std::size_t PruneTrace::bitplane_fetches() const {
  std::size_t total = 0;
  for (auto r : last_rounds()) total += static_cast<std::size_t>(r) + 1;
  return total;
}

bool PruneTrace::is_complete() const {
  std::vector<int> finals(num_keys, 0);
  std::vector<int> evicts(num_keys, 0);
  for (const auto& e : events) {
    if (e.key >= num_keys) return false;
    if (e.action == TraceAction::kFinal) ++finals[e.key];
    if (e.action == TraceAction::kEvict) ++evicts[e.key];
  }
  for (std::size_t j = 0; j < num_keys; ++j) {
    if (finals[j] + evicts[j] != 1) return false;
  }
  return true;
}

BesfQueryResult besf_query(std::span<const std::int32_t> query, const BitPlaneStore& keys,
                           const PruneConfig& cfg, std::int64_t gap, std::size_t query_index) {
  const auto num_keys = keys.num_keys();
  const int bits = keys.bits();
  if (num_keys == 0) throw std::invalid_argument("key set is empty");
  if (query.size() != keys.head_dim()) {
    throw std::invalid_argument("query has " + std::to_string(query.size()) +
                                " elements but keys have head_dim " +
                                std::to_string(keys.head_dim()));
  }
  if (gap < 0) throw std::invalid_argument("threshold gap must be >= 0");
  const auto table = build_margin_table(query, bits, query_index);

  BesfQueryResult result;
  auto& trace = result.trace;
  trace.query = query_index;
  trace.num_keys = num_keys;
  trace.bits = bits;
  trace.gap = gap;

  std::vector<std::size_t> survivors(num_keys);
  for (std::size_t j = 0; j < num_keys; ++j) survivors[j] = j;
  std::vector<std::int64_t> partials(num_keys, 0);
  std::vector<std::int64_t> lbs;
  std::vector<std::int64_t> ubs;

  for (int r = 0; r < bits; ++r) {
    lbs.resize(survivors.size());
    ubs.resize(survivors.size());
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      partials[i] += partial_delta(query, keys.plane(survivors[i], r), r, bits);
      const auto iv = score_bounds(partials[i], table, r);
      lbs[i] = iv.lb;
      ubs[i] = iv.ub;
    }
    const auto eta = lats_threshold(lbs, gap);
    trace.rounds.push_back({r, survivors, partials, eta});

    std::size_t kept = 0;
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      const bool keep = !cfg.prune_enabled || keep_token(ubs[i], eta, cfg.keep_rule);
      const auto action = !keep ? TraceAction::kEvict
                                : (r == bits - 1 ? TraceAction::kFinal : TraceAction::kKeep);
      trace.events.push_back({query_index, survivors[i], r, lbs[i], ubs[i], eta, action});
      if (keep) {
        survivors[kept] = survivors[i];
        partials[kept] = partials[i];
        ++kept;
      }
    }
    survivors.resize(kept);
    partials.resize(kept);
    if (survivors.empty()) break;
  }

  result.scores.query = query_index;
  for (std::size_t i = 0; i < survivors.size(); ++i) {
    result.scores.entries.emplace_back(survivors[i], partials[i]);
  }
  return result;
}

SparseScores score_survivors(std::span<const std::int32_t> query, const BitPlaneStore& keys,
                             std::span<const std::size_t> survivors, std::size_t query_index) {
  SparseScores out;
  out.query = query_index;
  for (auto j : survivors) {
    std::int64_t acc = 0;
    for (int r = 0; r < keys.bits(); ++r) acc += partial_delta(query, keys.plane(j, r), r, keys.bits());
    out.entries.emplace_back(j, acc);
  }
  std::sort(out.entries.begin(), out.entries.end());
  return out;
}

Vector<double> sparse_softmax(const SparseScores& scores, std::size_t num_keys,
                              std::size_t head_dim, double scale_q, double scale_k) {
  if (scores.entries.empty()) throw std::invalid_argument("softmax over an empty survivor set");
  const double logit_scale = scale_q * scale_k / std::sqrt(static_cast<double>(head_dim));
  double max_logit = -INFINITY;
  for (const auto& [j, a] : scores.entries) {
    if (j >= num_keys) throw std::out_of_range("survivor index out of range");
    max_logit = std::max(max_logit, static_cast<double>(a) * logit_scale);
  }
  Vector<double> p = Vector<double>::Zero(static_cast<Eigen::Index>(num_keys));
  double sum = 0.0;
  for (const auto& [j, a] : scores.entries) {
    const double e = std::exp(static_cast<double>(a) * logit_scale - max_logit);
    p[static_cast<Eigen::Index>(j)] = e;
    sum += e;
  }
  return p / sum;
}

Vector<double> sparse_sv(const Vector<double>& probs, const TensorF32& values) {
  const auto v = values.matrix();
  if (probs.size() != v.rows()) throw std::invalid_argument("probability length != value rows");
  Vector<double> out = Vector<double>::Zero(v.cols());
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    if (probs[j] != 0.0) out.noalias() += probs[j] * v.row(j).transpose().cast<double>();
  }
  return out;
}

void check_attention_shapes(const TensorF32& q, const TensorF32& k, const TensorF32& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw std::invalid_argument("Q, K and V must be rank-2 tensors");
  }
  if (q.cols() != k.cols()) throw std::invalid_argument("Q and K head dims differ");
  if (v.rows() != k.rows()) throw std::invalid_argument("V and K row counts differ");
  if (v.cols() != k.cols()) throw std::invalid_argument("V and K head dims differ");
}

BesfResult besf_attention(const TensorF32& q, const TensorF32& k, const TensorF32& v, int bits,
                          const PruneConfig& cfg) {
  check_attention_shapes(q, k, v);
  cfg.validate();
  const auto head_dim = static_cast<std::size_t>(k.cols());
  const auto num_keys = static_cast<std::size_t>(k.rows());

  BesfResult res;
  res.q = quantize(q, bits);
  res.k = quantize(k, bits);
  const auto store = decompose_bitplanes(res.k);
  res.gap = threshold_gap(cfg, head_dim, res.q.params.scale, res.k.params.scale);

  res.output.rows.resize(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Vector<std::int32_t> row = res.q.values.row(i).transpose();
    auto r = besf_query({row.data(), static_cast<std::size_t>(row.size())}, store, cfg, res.gap,
                        static_cast<std::size_t>(i));
    if (r.scores.entries.empty()) {
      throw std::runtime_error("query " + std::to_string(i) +
                               ": every key was pruned (strict keep rule with a zero gap?)");
    }
    const auto p = sparse_softmax(r.scores, num_keys, head_dim, res.q.params.scale,
                                  res.k.params.scale);
    res.output.rows.row(i) = sparse_sv(p, v).transpose();
    res.output.survivor_counts.push_back(r.scores.entries.size());
    res.traces.push_back(std::move(r.trace));
    res.scores.push_back(std::move(r.scores));
  }
  return res;
}

}  // namespace bsattn
