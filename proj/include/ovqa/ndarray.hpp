// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ovqa::diff {

/// Dense row-major array of doubles, rank 0..2.
///
/// This is the single numeric carrier for features, parameters and
/// gradients. Rank 0 is a scalar (numel == 1), rank 1 a vector, rank 2
/// a matrix. Invariant: numel() == data().size() at all times.
class NDArray {
 public:
  NDArray() = default;

  static NDArray scalar(double v);
  static NDArray zeros(std::span<const std::size_t> shape);
  static NDArray zeros_like(const NDArray& other);
  static NDArray full(std::span<const std::size_t> shape, double v);
  static NDArray vector(std::vector<double> values);
  static NDArray matrix(std::size_t rows, std::size_t cols);
  static NDArray matrix(std::size_t rows, std::size_t cols,
                        std::initializer_list<double> values);

  std::size_t rank() const { return rank_; }
  std::size_t numel() const { return data_.size(); }
  std::span<const std::size_t> shape() const { return {dims_.data(), rank_}; }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t rows() const { return rank_ == 2 ? dims_[0] : 1; }
  std::size_t cols() const { return rank_ == 2 ? dims_[1] : numel(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  /// Scalar access; only valid when numel() == 1.
  double item() const;

  bool same_shape(const NDArray& other) const;
  std::string shape_str() const;
  bool all_finite() const;

  void fill(double v);

 private:
  std::size_t rank_ = 0;
  std::array<std::size_t, 2> dims_ = {0, 0};
  std::vector<double> data_;
};

/// Throws std::invalid_argument naming both shapes when they differ.
void require_same_shape(const NDArray& a, const NDArray& b, const char* op);

}  // namespace ovqa::diff
