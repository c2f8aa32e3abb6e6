#pragma once

// Generators and brute-force references shared by the test binaries. The
// references here deliberately avoid the library's own helpers.

#include <cstdint>
#include <random>
#include <vector>

#include "bsattn/quantize.hpp"
#include "bsattn/tensor.hpp"

namespace testsupport {

using bsattn::QuantizedMatrix;
using bsattn::RowMatrix;
using bsattn::TensorF32;

inline QuantizedMatrix random_quantized(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                        int bits) {
  QuantizedMatrix m;
  m.params.bits = bits;
  m.params.scale = 1.0;
  std::uniform_int_distribution<std::int32_t> d(m.params.qmin(), m.params.qmax());
  m.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = d(rng);
  return m;
}

inline QuantizedMatrix from_rows(const std::vector<std::vector<std::int32_t>>& rows, int bits) {
  QuantizedMatrix m;
  m.params.bits = bits;
  m.params.scale = 1.0;
  m.values.resize(static_cast<Eigen::Index>(rows.size()),
                  rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t h = 0; h < rows[i].size(); ++h) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(h)) = rows[i][h];
    }
  }
  return m;
}

inline TensorF32 random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                               double std = 1.0) {
  std::normal_distribution<double> d(0.0, std);
  RowMatrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(d(rng));
  return TensorF32::from_matrix(m);
}

/// Two's-complement bit `pos` (0 = LSB) of `v` in an N-bit code.
inline int code_bit(std::int32_t v, int pos, int bits) {
  const std::uint32_t code = static_cast<std::uint32_t>(v) & ((1u << bits) - 1u);
  return static_cast<int>((code >> pos) & 1u);
}

/// Exhaustive extremes of q . k over every key whose first `known` MSB-first
/// bit planes agree with `k` (each element's unknown low bits range freely).
struct Extremes {
  std::int64_t lo;
  std::int64_t hi;
};

inline Extremes enumerate_extremes(const std::vector<std::int32_t>& q,
                                   const std::vector<std::int32_t>& k, int bits, int known) {
  const int free_bits = bits - known;
  const std::uint32_t span = 1u << free_bits;
  const std::size_t h = q.size();
  std::vector<std::uint32_t> idx(h, 0);
  Extremes e{INT64_MAX, INT64_MIN};
  for (;;) {
    std::int64_t dot = 0;
    for (std::size_t i = 0; i < h; ++i) {
      std::uint32_t code = static_cast<std::uint32_t>(k[i]) & ((1u << bits) - 1u);
      code = (code & ~(span - 1u)) | idx[i];
      // sign-extend the N-bit code
      std::int64_t val = code;
      if (code & (1u << (bits - 1))) val -= std::int64_t{1} << bits;
      dot += static_cast<std::int64_t>(q[i]) * val;
    }
    e.lo = std::min(e.lo, dot);
    e.hi = std::max(e.hi, dot);
    std::size_t c = 0;
    while (c < h && ++idx[c] == span) idx[c++] = 0;
    if (c == h) break;
  }
  return e;
}

inline std::int64_t dot(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<std::int64_t>(a[i]) * b[i];
  return s;
}

inline std::vector<std::int32_t> row_of(const QuantizedMatrix& m, Eigen::Index i) {
  std::vector<std::int32_t> r(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index h = 0; h < m.cols(); ++h) r[static_cast<std::size_t>(h)] = m.values(i, h);
  return r;
}

}  // namespace testsupport
