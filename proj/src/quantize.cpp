#include "bsattn/quantize.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bsattn {

void validate_bits(int bits) {
  if (bits < kMinBits || bits > kMaxBits) {
    throw std::invalid_argument("bit width " + std::to_string(bits) + " outside [" +
                                std::to_string(kMinBits) + ", " + std::to_string(kMaxBits) + "]");
  }
}

void QuantizedMatrix::validate() const {
  validate_bits(params.bits);
  if (!(params.scale > 0.0) || !std::isfinite(params.scale)) {
    throw std::invalid_argument("quantization scale must be positive and finite");
  }
  const auto lo = params.qmin();
  const auto hi = params.qmax();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const auto v = values.data()[i];
    if (v < lo || v > hi) {
      throw std::invalid_argument("quantized value " + std::to_string(v) + " at index " +
                                  std::to_string(i) + " outside INT" +
                                  std::to_string(params.bits) + " range");
    }
  }
}

QuantizedMatrix quantize(const TensorF32& t, int bits) {
  validate_bits(bits);
  require_finite(t);

  QuantizedMatrix q;
  q.params.bits = bits;
  const auto qmax = q.params.qmax();
  const auto qmin = q.params.qmin();

  double max_abs = 0.0;
  for (Eigen::Index i = 0; i < t.data().size(); ++i) {
    max_abs = std::max(max_abs, std::abs(static_cast<double>(t.data()[i])));
  }
  q.params.scale = max_abs > 0.0 ? max_abs / qmax : 1.0;

  q.values.resize(t.rows(), t.cols());
  // x / s is evaluated as x * qmax / max_abs so that exact ratios such as
  // 0.5 * 7 / 1 stay exact and ties reach nearbyint untouched.
  const double inv = max_abs > 0.0 ? static_cast<double>(qmax) / max_abs : 1.0;
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  for (Eigen::Index i = 0; i < t.data().size(); ++i) {
    const double r = std::nearbyint(static_cast<double>(t.data()[i]) * inv);
    q.values.data()[i] =
        static_cast<std::int32_t>(std::clamp(r, static_cast<double>(qmin), static_cast<double>(qmax)));
  }
  std::fesetround(saved);
  return q;
}

TensorF32 dequantize(const QuantizedMatrix& q) {
  TensorF32 t({static_cast<std::size_t>(q.rows()), static_cast<std::size_t>(q.cols())});
  t.matrix() = (q.values.cast<double>() * q.params.scale).cast<float>();
  return t;
}

}  // namespace bsattn
