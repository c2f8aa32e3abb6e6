#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "bsattn/tensor.hpp"

namespace bsattn {

struct Gaussian {
  double mean = 0.0;
  double std = 1.0;
};

/// Background N(0, base_std^2) rows plus `num_hot` rows pushed along a
/// seed-derived reference direction u by hot_gain * base_std * sqrt(H).
struct Peaked {
  std::size_t num_hot = 8;
  double hot_gain = 3.0;
  double base_std = 1.0;
};

struct SyntheticSpec {
  std::size_t rows = 256;  // S
  std::size_t cols = 64;   // H
  std::variant<Gaussian, Peaked> distribution = Gaussian{};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Key-side tensor for `spec`. Deterministic in the seed.
TensorF32 gen_synthetic(const SyntheticSpec& spec);

/// Unit vector in R^H the peaked generator aligns its hot rows with.
Vector<double> reference_direction(std::size_t head_dim, std::uint64_t seed);

/// Row indices of the planted hot keys (peaked mode), ascending.
std::vector<std::size_t> hot_rows(const SyntheticSpec& spec);

struct Workload {
  TensorF32 q;
  TensorF32 k;
  TensorF32 v;
};

/// Peaked-mode query rows: gain * base_std * sqrt(H) * u plus
/// N(0, (noise * base_std)^2) per element.
struct QueryShape {
  double gain = 0.5;
  double noise = 0.1;
};

/// Q, K and V for one attention head. K comes from gen_synthetic(spec).
/// Peaked queries point at the hot keys (see QueryShape). Gaussian: Q follows
/// K's law. V is always N(0, 1).
Workload gen_workload(const SyntheticSpec& spec, std::size_t num_queries,
                      const QueryShape& shape = {});

}  // namespace bsattn
