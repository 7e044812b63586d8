// SPDX-License-Identifier: Apache-2.0
#include "ovqa/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ovqa::diff {

NDArray NDArray::scalar(double v) {
  NDArray a;
  a.rank_ = 0;
  a.data_.assign(1, v);
  return a;
}

NDArray NDArray::zeros(std::span<const std::size_t> shape) {
  NDArray a;
  if (shape.size() > 2) {
    throw std::invalid_argument("NDArray supports rank <= 2, got rank " +
                                std::to_string(shape.size()));
  }
  a.rank_ = shape.size();
  std::size_t n = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    a.dims_[i] = shape[i];
    n *= shape[i];
  }
  a.data_.assign(n, 0.0);
  return a;
}

NDArray NDArray::zeros_like(const NDArray& other) {
  return zeros(other.shape());
}

NDArray NDArray::full(std::span<const std::size_t> shape, double v) {
  NDArray a = zeros(shape);
  a.fill(v);
  return a;
}

NDArray NDArray::vector(std::vector<double> values) {
  NDArray a;
  a.rank_ = 1;
  a.dims_[0] = values.size();
  a.data_ = std::move(values);
  return a;
}

NDArray NDArray::matrix(std::size_t rows, std::size_t cols) {
  const std::size_t shape[2] = {rows, cols};
  return zeros(shape);
}

NDArray NDArray::matrix(std::size_t rows, std::size_t cols,
                        std::initializer_list<double> values) {
  NDArray a = matrix(rows, cols);
  if (values.size() != a.numel()) {
    throw std::invalid_argument("matrix literal size mismatch");
  }
  std::copy(values.begin(), values.end(), a.data_.begin());
  return a;
}

double NDArray::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item() requires numel()==1, shape is " + shape_str());
  }
  return data_[0];
}

bool NDArray::same_shape(const NDArray& other) const {
  if (rank_ != other.rank_) return false;
  for (std::size_t i = 0; i < rank_; ++i) {
    if (dims_[i] != other.dims_[i]) return false;
  }
  return true;
}

std::string NDArray::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << "x";
    os << dims_[i];
  }
  os << "]";
  return os.str();
}

bool NDArray::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void NDArray::fill(double v) {
  std::fill(data_.begin(), data_.end(), v);
}

void require_same_shape(const NDArray& a, const NDArray& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  }
}

}  // namespace ovqa::diff
