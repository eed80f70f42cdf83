#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "transferlab/error.hpp"

namespace tl {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense N-dimensional array, row-major. Images use NHWC ordering.
///
/// Storage is a flat Eigen column array so whole-tensor arithmetic can be
/// written as Eigen expressions through array(); matrix() reinterprets the
/// same buffer as a row-major matrix for products.
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    check_dims();
    data_ = Array::Zero(numel(shape_));
  }

  BasicTensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (numel(shape_) != data_.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " holds " +
                       std::to_string(numel(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Array(Eigen::Map<const Array>(values.begin(), values.size()))) {}

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

  static BasicTensor constant(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // NHWC element access.
  Scalar& at(Index n, Index h, Index w, Index c) { return data_[offset(n, h, w, c)]; }
  Scalar at(Index n, Index h, Index w, Index c) const { return data_[offset(n, h, w, c)]; }

  /// Row-major view with the trailing dimension as columns.
  MatrixMap matrix() { return {data_.data(), size() / cols(), cols()}; }
  ConstMatrixMap matrix() const { return {data_.data(), size() / cols(), cols()}; }

  void reshape(Shape shape) {
    if (numel(shape) != data_.size()) {
      throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  BasicTensor reshaped(Shape shape) const {
    BasicTensor t = *this;
    t.reshape(std::move(shape));
    return t;
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  Index cols() const { return shape_.empty() ? 1 : shape_.back(); }

  Index offset(Index n, Index h, Index w, Index c) const {
    return ((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c;
  }

  void check_dims() const {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_string(shape_));
    }
  }

  Shape shape_;
  Array data_;
};

using Tensor = BasicTensor<double>;

}  // namespace tl
