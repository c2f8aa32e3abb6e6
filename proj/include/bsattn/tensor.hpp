#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bsattn {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(const Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

/// Dense row-major tensor of arbitrary rank. The last dimension is the
/// contiguous one; `matrix()` views the tensor as (rows = product of leading
/// dims) x (cols = last dim).
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Dims dims) : dims_(std::move(dims)) {
    check_dims(dims_);
    data_ = Vector<Scalar>::Zero(static_cast<Eigen::Index>(dims_product(dims_)));
  }

  Tensor(Dims dims, Vector<Scalar> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (static_cast<std::size_t>(data_.size()) != dims_product(dims_)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match dims product " +
                                  std::to_string(dims_product(dims_)));
    }
  }

  /// Builds a rank-2 tensor from any Eigen matrix expression.
  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    t.matrix() = m.template cast<Scalar>();
    return t;
  }

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }

  Eigen::Index rows() const {
    return dims_.empty() ? 0 : static_cast<Eigen::Index>(size() / dims_.back());
  }
  Eigen::Index cols() const { return dims_.empty() ? 0 : static_cast<Eigen::Index>(dims_.back()); }

  Vector<Scalar>& data() { return data_; }
  const Vector<Scalar>& data() const { return data_; }

  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  static void check_dims(const Dims& dims) {
    if (dims.empty()) throw std::invalid_argument("tensor must have at least one dimension");
    for (auto d : dims) {
      if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
    }
  }

  Dims dims_;
  Vector<Scalar> data_;
};

using TensorF32 = Tensor<float>;

/// Throws std::invalid_argument naming the first NaN/Inf element.
template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* what = "tensor") {
  for (Eigen::Index i = 0; i < t.data().size(); ++i) {
    if (!std::isfinite(static_cast<double>(t.data()[i]))) {
      throw std::invalid_argument(std::string(what) + " has non-finite value at index " +
                                  std::to_string(i));
    }
  }
}

}  // namespace bsattn
