/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "pise/common.hpp"

namespace pise {

/// Dense row-major tensor with up to four axes. Image batches use the
/// (batch, channels, height, width) layout; matrices use (rows, cols).
template <class S>
class Tensor {
 public:
  using Scalar = S;
  using Storage = std::vector<S, AlignedAlloc<S>>;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count_of(shape_), S(0)) {}

  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return i < shape_.size() ? shape_[i] : 1; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  Storage& raw() { return data_; }
  const Storage& raw() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(S(0)); }

  /// Reinterprets the flat storage under a new shape with equal element count.
  void reshape(std::vector<std::size_t> shape) {
    check(count_of(shape) == data_.size(), "reshape changes element count");
    shape_ = std::move(shape);
  }

  bool all_finite() const {
    for (const S& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Eigen views over the flat storage (no copies).
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap = Eigen::Map<
      const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  MatrixMap as_matrix(std::size_t rows, std::size_t cols) {
    check(rows * cols == data_.size(), "matrix view size mismatch");
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
  }
  ConstMatrixMap as_matrix(std::size_t rows, std::size_t cols) const {
    check(rows * cols == data_.size(), "matrix view size mismatch");
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(cols));
  }

 private:
  static std::size_t count_of(const std::vector<std::size_t>& shape) {
    std::size_t n = shape.empty() ? 0 : 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::vector<std::size_t> shape_;
  Storage data_;
};

/// Sum of products accumulated in double regardless of the storage scalar.
template <class S>
inline double dot_double(const S* a, const S* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <class S>
inline double l2_norm_double(const S* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = static_cast<double>(a[i]);
    acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace pise
