// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace advreg {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 1 and 2 are the only ranks the
/// engine produces; higher ranks are representable but unused.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double value);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  /// Leading dimension; 1 for scalars.
  std::size_t rows() const;
  /// Product of trailing dimensions; 1 for rank <= 1.
  std::size_t cols() const;

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) {
    return std::span<double>(values_).subspan(r * cols(), cols());
  }

  double item() const;
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& scale(double factor);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace advreg
