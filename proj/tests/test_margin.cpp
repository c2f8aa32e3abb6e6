#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "bsattn/bitplanes.hpp"
#include "bsattn/margin.hpp"
#include "support.hpp"

using namespace bsattn;
using testsupport::enumerate_extremes;

TEST_CASE("plane weights") {
  CHECK(plane_weight(0, 12) == -2048);
  CHECK(plane_weight(11, 12) == 1);
  CHECK(plane_weight(1, 4) == 4);
  CHECK_THROWS_AS(plane_weight(4, 4), std::out_of_range);
  CHECK_THROWS_AS(plane_weight(-1, 4), std::out_of_range);
  CHECK(remaining_mass(0, 4) == 7);
  CHECK(remaining_mass(3, 4) == 0);
}

TEST_CASE("margins: two-element query") {
  const std::vector<std::int32_t> q{3, -2};
  const auto t = build_margin_table(q, 4);
  CHECK(t.at(0).m_max == 21);
  CHECK(t.at(0).m_min == -14);
  CHECK(t.at(1).m_max == 9);
  CHECK(t.at(1).m_min == -6);
  CHECK(t.at(3).m_max == 0);
  CHECK(t.at(3).m_min == 0);
  CHECK_THROWS_AS(t.at(4), std::out_of_range);

  // the r=0 extremes over all 2^6 completions of a key with sign bits (0, 1)
  const auto e = enumerate_extremes(q, {5, -3}, 4, 1);
  CHECK(e.hi == 16 + 21);
  CHECK(e.lo == 16 - 14);
}

TEST_CASE("score bounds: worked examples") {
  const std::vector<std::int32_t> q{3, -2};
  const auto t = build_margin_table(q, 4);
  const auto r0 = score_bounds(16, t, 0);
  CHECK(r0.lb == 2);
  CHECK(r0.ub == 37);
  CHECK(r0.contains(21));
  const auto r1 = score_bounds(20, t, 1);
  CHECK(r1.lb == 14);
  CHECK(r1.ub == 29);
  CHECK(r1.contains(21));
  const auto r3 = score_bounds(21, t, 3);
  CHECK(r3.lb == 21);
  CHECK(r3.ub == 21);
}

TEST_CASE("margins equal the enumerated extremes for every key prefix") {
  // Tightness: the closed form is exactly the min/max over all completions.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const int bits = 2 + static_cast<int>(rng() % 4);  // 2..5
    const std::size_t h = 1 + rng() % 3;
    const auto qm = testsupport::random_quantized(rng, 1, h, bits);
    const auto km = testsupport::random_quantized(rng, 1, h, bits);
    const auto q = testsupport::row_of(qm, 0);
    const auto k = testsupport::row_of(km, 0);
    const auto table = build_margin_table(q, bits);
    const auto store = decompose_bitplanes(km);
    std::int64_t partial = 0;
    for (int r = 0; r < bits; ++r) {
      std::int64_t d = 0;
      for (std::size_t e = 0; e < h; ++e) d += store.bit(0, r, e) ? q[e] : 0;
      partial += plane_weight(r, bits) * d;
      const auto iv = score_bounds(partial, table, r);
      const auto ex = enumerate_extremes(q, k, bits, r + 1);
      REQUIRE(iv.lb == ex.lo);
      REQUIRE(iv.ub == ex.hi);
    }
    CHECK(partial == testsupport::dot(q, k));
  }
}

TEST_CASE("margins: sign structure and shrinkage") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int bits = 2 + static_cast<int>(rng() % 15);
    const auto qm = testsupport::random_quantized(rng, 1, 1 + rng() % 70, bits);
    const auto q = testsupport::row_of(qm, 0);
    const auto t = build_margin_table(q, bits, 7);
    CHECK(t.query == 7);
    REQUIRE(t.pairs.size() == static_cast<std::size_t>(bits));
    for (int r = 0; r < bits; ++r) {
      CHECK(t.at(r).round == r);
      CHECK(t.at(r).m_min <= 0);
      CHECK(t.at(r).m_max >= 0);
      if (r > 0) {
        CHECK(t.at(r).m_max <= t.at(r - 1).m_max);
        CHECK(t.at(r).m_min >= t.at(r - 1).m_min);
      }
    }
  }
}

TEST_CASE("accumulator width guard") {
  CHECK_NOTHROW(check_accumulator_width(64, 12));
  CHECK_NOTHROW(check_accumulator_width(1 << 20, 16));
  CHECK_THROWS_AS(check_accumulator_width(std::size_t{1} << 32, 16), WidthError);
  CHECK_THROWS_AS(check_accumulator_width(std::size_t{1} << 40, 12), WidthError);
}
