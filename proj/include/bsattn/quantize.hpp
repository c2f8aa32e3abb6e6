#pragma once

#include <cstdint>

#include "bsattn/tensor.hpp"

namespace bsattn {

inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 16;
inline constexpr int kDefaultBits = 12;

struct QuantParams {
  int bits = kDefaultBits;
  double scale = 1.0;  // real units per integer step

  std::int32_t qmin() const { return -(std::int32_t{1} << (bits - 1)); }
  std::int32_t qmax() const { return (std::int32_t{1} << (bits - 1)) - 1; }
};

void validate_bits(int bits);

/// Per-tensor symmetric integer matrix. Rank-1 inputs become a single row.
struct QuantizedMatrix {
  RowMatrix<std::int32_t> values;
  QuantParams params;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  /// Throws when any value is outside the signed N-bit range.
  void validate() const;
};

/// Absolute-max calibration with round-half-to-even. An all-zero tensor
/// gets scale 1.
QuantizedMatrix quantize(const TensorF32& t, int bits = kDefaultBits);

/// value * scale, elementwise, as a rank-2 tensor.
TensorF32 dequantize(const QuantizedMatrix& q);

}  // namespace bsattn
