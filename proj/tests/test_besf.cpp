#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "bsattn/besf.hpp"
#include "bsattn/bitplanes.hpp"
#include "bsattn/oracle.hpp"
#include "bsattn/synthetic.hpp"
#include "support.hpp"

using namespace bsattn;
using testsupport::enumerate_extremes;

namespace {

std::vector<std::int64_t> row_vec(const RowMatrix<std::int64_t>& a, Eigen::Index i) {
  std::vector<std::int64_t> r(static_cast<std::size_t>(a.cols()));
  for (Eigen::Index j = 0; j < a.cols(); ++j) r[static_cast<std::size_t>(j)] = a(i, j);
  return r;
}

BesfQueryResult run_one(const std::vector<std::int32_t>& q, const BitPlaneStore& store,
                        const PruneConfig& cfg, std::int64_t gap) {
  return besf_query(q, store, cfg, gap);
}

}  // namespace

TEST_CASE("partial_delta: sign plane example and empty plane") {
  const std::vector<std::int32_t> q{3, -2};
  const auto store = decompose_bitplanes(testsupport::from_rows({{5, -3}}, 4));
  CHECK(partial_delta(q, store.plane(0, 0), 0, 4) == 16);
  const std::vector<std::uint64_t> zero{0};
  CHECK(partial_delta(q, zero, 2, 4) == 0);
  const std::vector<std::uint64_t> stray{0b100};
  CHECK_THROWS_AS(partial_delta(q, stray, 0, 4), std::invalid_argument);
  const std::vector<std::uint64_t> too_long{0, 0};
  CHECK_THROWS_AS(partial_delta(q, too_long, 0, 4), std::invalid_argument);
}

TEST_CASE("partial_delta agrees with a scalar loop over bits") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 2 + static_cast<int>(rng() % 15);
    const std::size_t h = 1 + rng() % 200;
    const auto qm = testsupport::random_quantized(rng, 1, h, bits);
    const auto km = testsupport::random_quantized(rng, 1, h, bits);
    const auto q = testsupport::row_of(qm, 0);
    const auto store = decompose_bitplanes(km);
    const int r = static_cast<int>(rng() % static_cast<std::uint64_t>(bits));
    std::int64_t ref = 0;
    for (std::size_t e = 0; e < h; ++e) {
      if (testsupport::code_bit(km.values(0, static_cast<Eigen::Index>(e)), bits - 1 - r, bits)) ref += q[e];
    }
    ref *= r == 0 ? -(std::int64_t{1} << (bits - 1)) : (std::int64_t{1} << (bits - 1 - r));
    CHECK(partial_delta(q, store.plane(0, r), r, bits) == ref);
  }
}

TEST_CASE("radius_to_integer") {
  CHECK(radius_to_integer(5.0, 0.0, 64, 1.0, 1.0) == 0);
  CHECK(radius_to_integer(5.0, 0.6, 64, 1.0, 1.0) == 24);
  CHECK(radius_to_integer(5.0, 0.6, 64, 0.01, 0.02) == 120000);
  // 0.6 * 5 * 8 / 0.0002 is 120000 in exact rationals; it must not ceil to 120001
  CHECK(radius_to_integer(5.0, 0.7, 64, 1.0, 1.0) == 28);
  CHECK(radius_to_integer(1.0, 0.5, 1, 1.0, 3.0) == 1);  // ceil(1/6)
  CHECK_THROWS_AS(radius_to_integer(5.0, 0.6, 64, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(radius_to_integer(5.0, 0.6, 64, 1e-300, 1e-300), std::invalid_argument);

  PruneConfig c;
  c.radius_units = RadiusUnits::kInteger;
  c.alpha = 0.5;
  c.radius = 7;
  CHECK(threshold_gap(c, 64, 0.001, 0.001) == 4);
  c.alpha = 1.5;
  CHECK_THROWS_AS(threshold_gap(c, 64, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("lats_threshold") {
  const std::vector<std::int64_t> a{10, 2, 7};
  CHECK(lats_threshold(a, 3) == 7);
  const std::vector<std::int64_t> b{5};
  CHECK(lats_threshold(b, 0) == 5);
  const std::vector<std::int64_t> c{-4, -4, -4};
  CHECK(lats_threshold(c, 2) == -6);
  CHECK_THROWS_AS(lats_threshold(std::span<const std::int64_t>{}, 0), std::invalid_argument);
}

TEST_CASE("besf_query: pruning disabled keeps every key with exact scores") {
  std::mt19937_64 rng(31);
  const auto qm = testsupport::random_quantized(rng, 1, 16, 12);
  const auto km = testsupport::random_quantized(rng, 40, 16, 12);
  const auto store = decompose_bitplanes(km);
  PruneConfig cfg;
  cfg.prune_enabled = false;
  const auto q = testsupport::row_of(qm, 0);
  const auto res = run_one(q, store, cfg, 0);
  REQUIRE(res.scores.entries.size() == 40);
  for (std::size_t j = 0; j < 40; ++j) {
    CHECK(res.scores.entries[j].first == j);
    CHECK(res.scores.entries[j].second == testsupport::dot(q, testsupport::row_of(km, static_cast<Eigen::Index>(j))));
  }
  CHECK(res.trace.bitplane_fetches() == 40 * 12);
  CHECK(res.trace.is_complete());
}

TEST_CASE("besf_query: a single key always survives") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const auto qm = testsupport::random_quantized(rng, 1, 8, 6);
    const auto km = testsupport::random_quantized(rng, 1, 8, 6);
    const auto res = run_one(testsupport::row_of(qm, 0), decompose_bitplanes(km), PruneConfig{},
                             static_cast<std::int64_t>(rng() % 5));
    CHECK(res.trace.final_survivors() == std::vector<std::size_t>{0});
  }
}

TEST_CASE("besf_query: dominant key found by exhaustive search") {
  // Search small INT4 cases for one where, by the enumeration oracle, the
  // dominant key's round-1 lower bound clears every other key's round-1
  // upper bound by more than R_int.
  const int bits = 4;
  const std::int64_t gap = 2;
  std::mt19937_64 rng(33);
  int found = 0;
  for (int attempt = 0; attempt < 20000 && found < 25; ++attempt) {
    const auto qm = testsupport::random_quantized(rng, 1, 2, bits);
    const auto km = testsupport::random_quantized(rng, 8, 2, bits);
    const auto q = testsupport::row_of(qm, 0);
    std::size_t dom = 0;
    std::int64_t best = INT64_MIN;
    for (std::size_t j = 0; j < 8; ++j) {
      const auto e = enumerate_extremes(q, testsupport::row_of(km, static_cast<Eigen::Index>(j)), bits, 2);
      if (e.lo > best) best = e.lo, dom = j;
    }
    bool dominates = true;
    for (std::size_t j = 0; j < 8 && dominates; ++j) {
      if (j == dom) continue;
      const auto e = enumerate_extremes(q, testsupport::row_of(km, static_cast<Eigen::Index>(j)), bits, 2);
      dominates = best - gap > e.hi;
    }
    if (!dominates) continue;
    ++found;
    const auto res = run_one(q, decompose_bitplanes(km), PruneConfig{}, gap);
    CHECK(res.trace.final_survivors() == std::vector<std::size_t>{dom});
    for (const auto& e : res.trace.evictions()) CHECK(e.round <= 1);
    CHECK(res.trace.evictions().size() == 7);
  }
  CHECK(found >= 10);
}

TEST_CASE("besf_query: trace structure") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    const int bits = 3 + static_cast<int>(rng() % 10);
    const auto qm = testsupport::random_quantized(rng, 1, 12, bits);
    const auto km = testsupport::random_quantized(rng, 30, 12, bits);
    const auto gap = static_cast<std::int64_t>(rng() % 200);
    const auto res = run_one(testsupport::row_of(qm, 0), decompose_bitplanes(km), PruneConfig{}, gap);
    const auto& t = res.trace;
    REQUIRE(t.is_complete());
    // survivor sets shrink and evicted keys never come back
    for (std::size_t r = 1; r < t.rounds.size(); ++r) {
      const auto& prev = t.rounds[r - 1].survivors;
      for (auto j : t.rounds[r].survivors) {
        CHECK(std::binary_search(prev.begin(), prev.end(), j));
      }
    }
    // eta never decreases across rounds
    for (std::size_t r = 1; r < t.rounds.size(); ++r) CHECK(t.rounds[r].eta >= t.rounds[r - 1].eta);
    // fetches = sum over keys of (last round + 1)
    std::size_t fetches = 0;
    for (const auto& rs : t.rounds) fetches += rs.survivors.size();
    CHECK(t.bitplane_fetches() == fetches);
    // every decision replays through the predicate
    for (const auto& e : t.events) {
      CHECK((e.action != TraceAction::kEvict) == keep_token(e.ub, e.eta, KeepRule::kGte));
    }
  }
}

TEST_CASE("besf_query: argmax always survives under gte") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const auto qm = testsupport::random_quantized(rng, 1, 16, 8);
    const auto km = testsupport::random_quantized(rng, 64, 16, 8);
    const auto exact = oracle::exact_scores(qm, km);
    const auto row = row_vec(exact, 0);
    const auto res = run_one(testsupport::row_of(qm, 0), decompose_bitplanes(km), PruneConfig{}, 0);
    const auto surv = res.trace.final_survivors();
    const auto best = *std::max_element(row.begin(), row.end());
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == best) CHECK(std::binary_search(surv.begin(), surv.end(), j));
    }
    CHECK(oracle::survivor_recall(res.trace, row, 1) == 1.0);
  }
}

TEST_CASE("keep rules differ only on ties") {
  CHECK(keep_token(5, 5, KeepRule::kGte));
  CHECK_FALSE(keep_token(5, 5, KeepRule::kStrictGt));
  CHECK(keep_token(6, 5, KeepRule::kStrictGt));
  CHECK_FALSE(keep_token(4, 5, KeepRule::kGte));

  // strict rule with a zero gap prunes even the argmax at the LSB
  const auto km = testsupport::from_rows({{3}, {1}}, 4);
  PruneConfig strict;
  strict.keep_rule = KeepRule::kStrictGt;
  const std::vector<std::int32_t> q{1};
  const auto res = run_one(q, decompose_bitplanes(km), strict, 0);
  CHECK(res.scores.entries.empty());
  const auto ok = run_one(q, decompose_bitplanes(km), strict, 1);
  CHECK(ok.trace.final_survivors() == std::vector<std::size_t>{0});
}

TEST_CASE("sparse_softmax") {
  SparseScores one{0, {{2, 100}}};
  const auto p1 = sparse_softmax(one, 5, 64, 0.1, 0.1);
  CHECK(p1[2] == 1.0);
  CHECK(p1.sum() == 1.0);

  SparseScores two{0, {{0, 50}, {3, 50}}};
  const auto p2 = sparse_softmax(two, 4, 16, 0.5, 0.5);
  CHECK(p2[0] == doctest::Approx(0.5));
  CHECK(p2[3] == doctest::Approx(0.5));
  CHECK(p2[1] == 0.0);

  // logits [0, -delta]: logit scale 1 at H=1, s=1
  for (std::int64_t delta : {1, 3, 10}) {
    SparseScores s{0, {{0, 0}, {1, -delta}}};
    const auto p = sparse_softmax(s, 2, 1, 1.0, 1.0);
    CHECK(p[1] < std::exp(-static_cast<double>(delta)));
  }
  CHECK_THROWS_AS(sparse_softmax(SparseScores{}, 3, 4, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("besf_attention: pruning disabled equals the quantized dense oracle") {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = testsupport::random_tensor(rng, 4, 32);
    const auto k = testsupport::random_tensor(rng, 50, 32);
    const auto v = testsupport::random_tensor(rng, 50, 32);
    PruneConfig cfg;
    cfg.prune_enabled = false;
    const auto res = besf_attention(q, k, v, 12, cfg);
    const auto ref = oracle::dense_attention_quant(quantize(q, 12), quantize(k, 12), v);
    CHECK((res.output.rows - ref).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("besf_attention: singleton key returns its value row") {
  std::mt19937_64 rng(37);
  const auto q = testsupport::random_tensor(rng, 1, 8);
  const auto k = testsupport::random_tensor(rng, 1, 8);
  const auto v = testsupport::random_tensor(rng, 1, 8);
  const auto res = besf_attention(q, k, v, 12, PruneConfig{});
  for (Eigen::Index h = 0; h < 8; ++h) CHECK(res.output.rows(0, h) == static_cast<double>(v.matrix()(0, h)));
}

TEST_CASE("besf_attention: shape errors") {
  std::mt19937_64 rng(38);
  const auto a = testsupport::random_tensor(rng, 2, 8);
  const auto b = testsupport::random_tensor(rng, 3, 8);
  const auto c = testsupport::random_tensor(rng, 3, 4);
  CHECK_THROWS_AS(besf_attention(a, b, c, 12, PruneConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(besf_attention(c, b, b, 12, PruneConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(besf_attention(a, b, a, 12, PruneConfig{}), std::invalid_argument);
}

TEST_CASE("besf_attention: planted keys survive on the peaked workload") {
  SyntheticSpec s;
  s.rows = 256;
  s.cols = 64;
  s.seed = 42;
  s.distribution = Peaked{8, 3.0, 1.0};
  const auto w = gen_workload(s, 4);
  const auto res = besf_attention(w.q, w.k, w.v, 12, PruneConfig{});
  const auto exact = oracle::exact_scores(res.q, res.k);
  const auto hot = hot_rows(s);
  for (std::size_t i = 0; i < res.traces.size(); ++i) {
    const auto row = row_vec(exact, static_cast<Eigen::Index>(i));
    auto top = oracle::top_k(row, 8);
    std::sort(top.begin(), top.end());
    CHECK(top == hot);
    const auto surv = res.traces[i].final_survivors();
    for (auto j : hot) CHECK(std::binary_search(surv.begin(), surv.end(), j));
    CHECK(oracle::survivor_recall(res.traces[i], row, 8) == 1.0);
  }
}

TEST_CASE("dense oracles") {
  std::mt19937_64 rng(39);
  // S = 1 returns the value row
  const auto q = testsupport::random_tensor(rng, 3, 8);
  const auto k1 = testsupport::random_tensor(rng, 1, 8);
  const auto v1 = testsupport::random_tensor(rng, 1, 8);
  const auto o1 = oracle::dense_attention_f32(q, k1, v1);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK((o1.row(i) - v1.matrix().row(0).cast<double>()).cwiseAbs().maxCoeff() < 1e-12);
  }
  // identical keys give the mean of V
  RowMatrix<float> same(5, 8);
  for (Eigen::Index j = 0; j < 5; ++j) same.row(j) = k1.matrix().row(0);
  const auto v5 = testsupport::random_tensor(rng, 5, 8);
  const auto o5 = oracle::dense_attention_f32(q, TensorF32::from_matrix(same), v5);
  const Eigen::RowVectorXd mean = v5.matrix().cast<double>().colwise().mean();
  for (Eigen::Index i = 0; i < 3; ++i) CHECK((o5.row(i) - mean).cwiseAbs().maxCoeff() < 1e-9);
  // softmax rows sum to one
  const auto qm = testsupport::random_quantized(rng, 4, 8, 12);
  const auto km = testsupport::random_quantized(rng, 8, 8, 12);
  const auto a = oracle::exact_scores(qm, km);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const auto row = row_vec(a, i);
    CHECK(oracle::dense_softmax_row(row, 1e-4).sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("exact_scores") {
  const auto a = oracle::exact_scores(testsupport::from_rows({{3, -2}}, 4),
                                      testsupport::from_rows({{5, -3}}, 4));
  CHECK(a(0, 0) == 21);
  const auto z = oracle::exact_scores(testsupport::from_rows({{0, 0}}, 4),
                                      testsupport::from_rows({{5, -3}, {1, 1}}, 4));
  CHECK(z.isZero());
  // one-hot query selects a key column
  const auto km = testsupport::from_rows({{1, 2, 3}, {-4, 5, -6}}, 4);
  const auto sel = oracle::exact_scores(testsupport::from_rows({{0, 2, 0}}, 4), km);
  CHECK(sel(0, 0) == 4);
  CHECK(sel(0, 1) == 10);
}

TEST_CASE("verify_bounds: exhaustive INT4 and negative control") {
  // every INT4 pair at H = 1 and H = 2
  for (std::size_t h : {std::size_t{1}, std::size_t{2}}) {
    std::vector<std::vector<std::int32_t>> rows;
    const std::size_t count = h == 1 ? 16 : 256;
    for (std::size_t c = 0; c < count; ++c) {
      std::vector<std::int32_t> r;
      for (std::size_t e = 0; e < h; ++e) r.push_back(static_cast<std::int32_t>((c >> (4 * e)) & 15) - 8);
      rows.push_back(r);
    }
    const auto m = testsupport::from_rows(rows, 4);
    const auto report = oracle::verify_bounds(m, decompose_bitplanes(m));
    CHECK(report.passed());
    CHECK(report.cases == count * count * 4);
  }

  // m_max decremented: the key reaching the upper extreme breaks the bound
  const auto q = testsupport::from_rows({{3, -2}}, 4);
  const auto k = testsupport::from_rows({{7, -8}}, 4);  // all-ones low bits for q>0, zeros for q<0
  auto broken = [](std::span<const std::int32_t> row, int bits, std::size_t i) {
    auto t = build_margin_table(row, bits, i);
    for (auto& p : t.pairs) {
      if (p.m_max > 0) --p.m_max;
    }
    return t;
  };
  const auto bad = oracle::verify_bounds(q, decompose_bitplanes(k), broken);
  CHECK_FALSE(bad.passed());
  CHECK(bad.violations.front().kind == "bound");
}

TEST_CASE("check_prune_soundness: golden traces pass, forged eviction fails") {
  std::mt19937_64 rng(40);
  const auto q = testsupport::random_tensor(rng, 3, 16);
  const auto k = testsupport::random_tensor(rng, 60, 16);
  const auto res = besf_attention(q, k, k, 12, PruneConfig{});
  const auto exact = oracle::exact_scores(res.q, res.k);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto row = row_vec(exact, static_cast<Eigen::Index>(i));
    CHECK(oracle::check_prune_soundness(res.traces[i], row).passed());
    auto forged = res.traces[i];
    const auto argmax = oracle::top_k(row, 1).front();
    for (auto& e : forged.events) {
      if (e.key == argmax && e.action == TraceAction::kFinal) e.action = TraceAction::kEvict;
    }
    const auto report = oracle::check_prune_soundness(forged, row);
    CHECK_FALSE(report.passed());
    CHECK(report.violations.front().key == argmax);
  }
}

TEST_CASE("survivor_recall") {
  std::mt19937_64 rng(41);
  const auto q = testsupport::random_tensor(rng, 2, 16);
  const auto k = testsupport::random_tensor(rng, 40, 16);
  PruneConfig off;
  off.prune_enabled = false;
  const auto res = besf_attention(q, k, k, 12, off);
  const auto exact = oracle::exact_scores(res.q, res.k);
  const auto row = row_vec(exact, 0);
  for (std::size_t kk : {std::size_t{0}, std::size_t{1}, std::size_t{7}, std::size_t{40}}) {
    CHECK(oracle::survivor_recall(res.traces[0], row, kk) == 1.0);
  }
  CHECK_THROWS_AS(oracle::survivor_recall(res.traces[0], row, 41), std::invalid_argument);
  const std::vector<std::int64_t> ties{5, 9, 9, 1};
  CHECK(oracle::top_k(ties, 2) == std::vector<std::size_t>{1, 2});
}
