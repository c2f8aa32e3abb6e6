#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "bsattn/bitplanes.hpp"
#include "bsattn/bstr_io.hpp"
#include "bsattn/quantize.hpp"
#include "bsattn/synthetic.hpp"
#include "support.hpp"

using namespace bsattn;
using testsupport::code_bit;

namespace {

TensorF32 vec(std::initializer_list<float> xs) {
  Vector<float> d(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (float x : xs) d[i++] = x;
  return TensorF32({xs.size()}, d);
}

// Scalar re-implementation: round(x / s) with ties to even, done in long double.
std::int32_t scalar_quant(double x, double max_abs, int bits) {
  const long double qmax = (1 << (bits - 1)) - 1;
  const long double y = static_cast<long double>(x) * qmax / max_abs;
  long double fl = std::floor(y);
  long double diff = y - fl;
  long double r;
  if (diff > 0.5L) {
    r = fl + 1;
  } else if (diff < 0.5L) {
    r = fl;
  } else {
    r = std::fmod(fl, 2.0L) == 0 ? fl : fl + 1;
  }
  return static_cast<std::int32_t>(std::clamp<long double>(r, -qmax - 1, qmax));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("bsattn_test_" + name);
}

}  // namespace

TEST_CASE("quantize: three-element example") {
  const auto q = quantize(vec({1.0f, -1.0f, 0.5f}), 4);
  CHECK(q.params.scale == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(q.values(0, 0) == 7);
  CHECK(q.values(0, 1) == -7);
  CHECK(q.values(0, 2) == 4);
  CHECK(q.values(0, 2) == scalar_quant(0.5, 1.0, 4));
}

TEST_CASE("quantize: ties go to the even neighbour") {
  // max 7 at N=4 gives an identity scale, so 2.5 and 3.5 are exact ties.
  const auto q = quantize(vec({7.0f, 2.5f, 3.5f, -2.5f, -0.5f}), 4);
  CHECK(q.values(0, 1) == 2);
  CHECK(q.values(0, 2) == 4);
  CHECK(q.values(0, 3) == -2);
  CHECK(q.values(0, 4) == 0);
}

TEST_CASE("quantize: all-zero tensor") {
  const auto q = quantize(TensorF32({2, 2}), 12);
  CHECK(q.params.scale == 1.0);
  CHECK(q.values.isZero());
}

TEST_CASE("quantize: single positive element maps to full scale") {
  for (int bits = kMinBits; bits <= kMaxBits; ++bits) {
    const auto q = quantize(vec({0.37f}), bits);
    CHECK(q.values(0, 0) == (1 << (bits - 1)) - 1);
  }
}

TEST_CASE("quantize: rejects non-finite input by index") {
  auto t = vec({1.0f, 2.0f, std::numeric_limits<float>::quiet_NaN()});
  try {
    quantize(t, 8);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("index 2") != std::string::npos);
  }
  t.data()[2] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(quantize(t, 8), std::invalid_argument);
}

TEST_CASE("quantize: bit width limits") {
  CHECK_THROWS_AS(quantize(vec({1.0f}), 1), std::invalid_argument);
  CHECK_THROWS_AS(quantize(vec({1.0f}), 17), std::invalid_argument);
}

TEST_CASE("quantize: agrees with scalar reference and error stays within half a step") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int bits = 2 + static_cast<int>(rng() % 15);
    const auto t = testsupport::random_tensor(rng, 5, 9, 0.1 + (rng() % 100) / 10.0);
    const auto q = quantize(t, bits);
    const double max_abs = t.data().cast<double>().cwiseAbs().maxCoeff();
    const auto back = dequantize(q);
    for (Eigen::Index i = 0; i < t.data().size(); ++i) {
      REQUIRE(q.values.data()[i] == scalar_quant(t.data()[i], max_abs, bits));
      CHECK(std::abs(back.data()[i] - t.data()[i]) <= q.params.scale / 2 * (1 + 1e-6) + 1e-7);
    }
    CHECK_NOTHROW(q.validate());
  }
}

TEST_CASE("dequantize: examples") {
  const auto q = testsupport::from_rows({{7, -7, 4}}, 4);
  QuantizedMatrix s = q;
  s.params.scale = 1.0 / 7.0;
  const auto t = dequantize(s);
  CHECK(t.data()[0] == doctest::Approx(1.0));
  CHECK(t.data()[1] == doctest::Approx(-1.0));
  CHECK(t.data()[2] == doctest::Approx(4.0 / 7.0));

  const auto z = dequantize(testsupport::from_rows({{0, 0}, {0, 0}}, 6));
  CHECK(z.matrix().isZero());
}

TEST_CASE("bitplanes: positive and negative codes") {
  const auto store = decompose_bitplanes(testsupport::from_rows({{5}, {-3}}, 4));
  const int five[] = {0, 1, 0, 1};
  const int minus_three[] = {1, 1, 0, 1};
  for (int r = 0; r < 4; ++r) {
    CHECK(store.bit(0, r, 0) == static_cast<bool>(five[r]));
    CHECK(store.bit(1, r, 0) == static_cast<bool>(minus_three[r]));
  }
}

TEST_CASE("bitplanes: reassembly matches input") {
  std::mt19937_64 rng(11);
  const auto m = testsupport::random_quantized(rng, 8, 4, 12);
  const auto store = decompose_bitplanes(m);
  std::size_t checked = 0;
  for (std::size_t j = 0; j < 8; ++j) {
    const auto row = store.reconstruct_row(j);
    for (Eigen::Index h = 0; h < 4; ++h) {
      // independent reassembly from raw bits
      std::int64_t v = 0;
      for (int r = 0; r < 12; ++r) {
        const std::int64_t w = r == 0 ? -(1 << 11) : (1 << (11 - r));
        v += store.bit(j, r, static_cast<std::size_t>(h)) ? w : 0;
      }
      CHECK(v == m.values(static_cast<Eigen::Index>(j), h));
      CHECK(row[h] == m.values(static_cast<Eigen::Index>(j), h));
      ++checked;
    }
  }
  CHECK(checked == 32);
}

TEST_CASE("bitplanes: every bit matches the two's-complement code") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int bits = 2 + static_cast<int>(rng() % 15);
    const std::size_t h = 1 + rng() % 150;
    const auto m = testsupport::random_quantized(rng, 3, h, bits);
    const auto store = decompose_bitplanes(m);
    CHECK(store.words_per_plane() == (h + 63) / 64);
    CHECK(store.plane_bytes() == (h + 7) / 8);
    for (std::size_t j = 0; j < 3; ++j) {
      for (int r = 0; r < bits; ++r) {
        for (std::size_t e = 0; e < h; ++e) {
          REQUIRE(store.bit(j, r, e) ==
                  static_cast<bool>(code_bit(m.values(static_cast<Eigen::Index>(j),
                                                      static_cast<Eigen::Index>(e)),
                                             bits - 1 - r, bits)));
        }
        // padding bits past H stay clear
        const auto plane = store.plane(j, r);
        if (h % 64 != 0) CHECK((plane.back() >> (h % 64)) == 0);
      }
    }
  }
}

TEST_CASE("bitplanes: rejects out-of-range values") {
  auto m = testsupport::from_rows({{8}}, 4);
  CHECK_THROWS_AS(decompose_bitplanes(m), std::invalid_argument);
}

TEST_CASE("bstr: header layout") {
  const auto t = TensorF32::from_matrix(RowMatrix<float>::Constant(2, 3, 1.5f));
  const auto bytes = encode_tensor(t);
  REQUIRE(bytes.size() == 4 + 2 + 1 + 1 + 2 * 8 + 6 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "BSTR");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 2);
  CHECK(bytes[8] == 2);
  CHECK(bytes[16] == 3);
  // 1.5f = 0x3FC00000, little-endian
  CHECK(bytes[24] == 0x00);
  CHECK(bytes[26] == 0xC0);
  CHECK(bytes[27] == 0x3F);
}

TEST_CASE("bstr: round trip is bitwise exact") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Dims dims;
    const auto rank = 1 + rng() % 4;
    for (std::size_t i = 0; i < rank; ++i) dims.push_back(1 + rng() % 6);
    TensorF32 t(dims);
    for (Eigen::Index i = 0; i < t.data().size(); ++i) {
      t.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(rng()) & 0x7F7FFFFFu);
    }
    const auto back = decode_tensor(encode_tensor(t));
    REQUIRE(back.dims() == t.dims());
    CHECK(std::memcmp(back.data().data(), t.data().data(), t.size() * sizeof(float)) == 0);
  }
  const auto path = temp_path("roundtrip.bstr");
  const auto t = testsupport::random_tensor(rng, 4, 5);
  save_tensor(t, path);
  CHECK(load_tensor(path) == t);
  std::filesystem::remove(path);
}

TEST_CASE("bstr: distinct diagnostics for malformed input") {
  const auto good = encode_tensor(TensorF32::from_matrix(RowMatrix<float>::Ones(2, 2)));
  auto kind_of = [](const std::vector<std::uint8_t>& b) {
    try {
      decode_tensor(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("decode accepted malformed input");
    return FormatError::Kind::kIo;
  };

  auto bad = good;
  bad[0] = 'X', bad[1] = 'X', bad[2] = 'X', bad[3] = 'X';
  CHECK(kind_of(bad) == FormatError::Kind::kBadMagic);

  bad = good;
  bad[4] = 2;
  CHECK(kind_of(bad) == FormatError::Kind::kVersionMismatch);

  bad = good;
  bad[6] = 1;
  CHECK(kind_of(bad) == FormatError::Kind::kUnsupportedDtype);

  bad = good;
  bad.pop_back();
  CHECK(kind_of(bad) == FormatError::Kind::kTruncated);

  bad = good;
  bad.push_back(0);
  CHECK(kind_of(bad) == FormatError::Kind::kTruncated);

  bad = good;
  bad[8] = 3;  // dims now claim 6 elements, payload holds 4
  CHECK(kind_of(bad) == FormatError::Kind::kTruncated);

  bad.assign(good.begin(), good.begin() + 10);
  CHECK(kind_of(bad) == FormatError::Kind::kTruncated);

  CHECK_THROWS_AS(load_tensor(temp_path("does_not_exist.bstr")), FormatError);
}

TEST_CASE("synthetic: deterministic and seed-sensitive") {
  SyntheticSpec s;
  s.rows = 32;
  s.cols = 16;
  s.seed = 99;
  CHECK(gen_synthetic(s) == gen_synthetic(s));
  auto other = s;
  other.seed = 100;
  CHECK_FALSE(gen_synthetic(s) == gen_synthetic(other));
  s.distribution = Peaked{};
  const auto a = gen_workload(s, 3);
  const auto b = gen_workload(s, 3);
  CHECK(a.q == b.q);
  CHECK(a.k == b.k);
  CHECK(a.v == b.v);
}

TEST_CASE("synthetic: zero-variance gaussian is all zero") {
  SyntheticSpec s;
  s.rows = 4;
  s.cols = 4;
  s.distribution = Gaussian{0.0, 0.0};
  CHECK(gen_synthetic(s).matrix().isZero());
}

TEST_CASE("synthetic: validation") {
  SyntheticSpec s;
  s.rows = 256;
  s.distribution = Peaked{300, 3.0, 1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.distribution = Gaussian{0.0, -1.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = SyntheticSpec{};
  s.rows = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("synthetic: planted keys rank first against the reference query") {
  for (std::uint64_t seed : {1ull, 2ull, 42ull, 1234ull}) {
    SyntheticSpec s;
    s.rows = 256;
    s.cols = 64;
    s.seed = seed;
    s.distribution = Peaked{4, 3.0, 1.0};
    const auto k = gen_synthetic(s);
    const auto u = reference_direction(64, seed);
    CHECK(u.norm() == doctest::Approx(1.0));

    // quantize the reference query together with the keys and score exactly
    const auto kq = quantize(k, 12);
    const auto uq = quantize(TensorF32::from_matrix(u.transpose()), 12);
    std::vector<std::pair<std::int64_t, std::size_t>> scores;
    for (Eigen::Index j = 0; j < kq.rows(); ++j) {
      std::int64_t acc = 0;
      for (Eigen::Index h = 0; h < 64; ++h) acc += std::int64_t{uq.values(0, h)} * kq.values(j, h);
      scores.emplace_back(acc, static_cast<std::size_t>(j));
    }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    std::vector<std::size_t> top;
    for (int i = 0; i < 4; ++i) top.push_back(scores[static_cast<std::size_t>(i)].second);
    std::sort(top.begin(), top.end());
    CHECK(top == hot_rows(s));
  }
}
