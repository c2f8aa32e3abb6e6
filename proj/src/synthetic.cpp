#include "bsattn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace bsattn {
namespace {

enum Stream : std::uint64_t { kKeys = 1, kQueries = 2, kValues = 3, kDirection = 4, kHot = 5 };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

TensorF32 gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double std,
                          std::mt19937_64& rng) {
  TensorF32 t({rows, cols});
  if (std == 0.0) {
    t.data().setConstant(static_cast<float>(mean));
    return t;
  }
  std::normal_distribution<double> dist(mean, std);
  for (Eigen::Index i = 0; i < t.data().size(); ++i) t.data()[i] = static_cast<float>(dist(rng));
  return t;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (rows == 0 || cols == 0) throw std::invalid_argument("synthetic shape must be at least 1x1");
  if (const auto* g = std::get_if<Gaussian>(&distribution)) {
    if (!(g->std >= 0.0) || !std::isfinite(g->std) || !std::isfinite(g->mean)) {
      throw std::invalid_argument("gaussian std must be finite and >= 0");
    }
  } else {
    const auto& p = std::get<Peaked>(distribution);
    if (p.num_hot > rows) {
      throw std::invalid_argument("num_hot " + std::to_string(p.num_hot) + " exceeds " +
                                  std::to_string(rows) + " rows");
    }
    if (!(p.base_std >= 0.0) || !std::isfinite(p.base_std) || !std::isfinite(p.hot_gain)) {
      throw std::invalid_argument("peaked base_std must be finite and >= 0");
    }
  }
}

Vector<double> reference_direction(std::size_t head_dim, std::uint64_t seed) {
  auto rng = stream_rng(seed, kDirection);
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector<double> u(static_cast<Eigen::Index>(head_dim));
  do {
    for (Eigen::Index h = 0; h < u.size(); ++h) u[h] = dist(rng);
  } while (u.norm() == 0.0);
  return u.normalized();
}

std::vector<std::size_t> hot_rows(const SyntheticSpec& spec) {
  const auto* p = std::get_if<Peaked>(&spec.distribution);
  if (p == nullptr) return {};
  std::vector<std::size_t> idx(spec.rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto rng = stream_rng(spec.seed, kHot);
  // Partial Fisher-Yates; std::shuffle's exact sequence is library-specific.
  for (std::size_t i = 0; i < p->num_hot; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, spec.rows - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(p->num_hot);
  std::sort(idx.begin(), idx.end());
  return idx;
}

TensorF32 gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = stream_rng(spec.seed, kKeys);
  if (const auto* g = std::get_if<Gaussian>(&spec.distribution)) {
    return gaussian_matrix(spec.rows, spec.cols, g->mean, g->std, rng);
  }
  const auto& p = std::get<Peaked>(spec.distribution);
  auto t = gaussian_matrix(spec.rows, spec.cols, 0.0, p.base_std, rng);
  const auto u = reference_direction(spec.cols, spec.seed);
  const double push = p.hot_gain * p.base_std * std::sqrt(static_cast<double>(spec.cols));
  auto m = t.matrix();
  for (auto j : hot_rows(spec)) {
    m.row(static_cast<Eigen::Index>(j)) += (push * u.transpose()).cast<float>();
  }
  return t;
}

Workload gen_workload(const SyntheticSpec& spec, std::size_t num_queries, const QueryShape& shape) {
  if (num_queries == 0) throw std::invalid_argument("workload needs at least one query");
  if (!(shape.gain >= 0.0) || !(shape.noise >= 0.0) || !std::isfinite(shape.gain) ||
      !std::isfinite(shape.noise)) {
    throw std::invalid_argument("query gain and noise must be finite and non-negative");
  }
  Workload w;
  w.k = gen_synthetic(spec);
  auto qrng = stream_rng(spec.seed, kQueries);
  auto vrng = stream_rng(spec.seed, kValues);
  if (const auto* g = std::get_if<Gaussian>(&spec.distribution)) {
    w.q = gaussian_matrix(num_queries, spec.cols, g->mean, g->std, qrng);
  } else {
    const auto& p = std::get<Peaked>(spec.distribution);
    w.q = gaussian_matrix(num_queries, spec.cols, 0.0, shape.noise * p.base_std, qrng);
    const auto u = reference_direction(spec.cols, spec.seed);
    const double gain = shape.gain * p.base_std * std::sqrt(static_cast<double>(spec.cols));
    w.q.matrix().rowwise() += (gain * u.transpose()).cast<float>();
  }
  w.v = gaussian_matrix(spec.rows, spec.cols, 0.0, 1.0, vrng);
  return w;
}

}  // namespace bsattn
