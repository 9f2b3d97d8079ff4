// SPDX-License-Identifier: Apache-2.0
#include "advreg/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "advreg/errors.hpp"

namespace advreg {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_dims(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  values_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_dims(shape_);
  if (element_count(shape_) != values_.size())
    throw ShapeError("shape " + shape_string(shape_) + " does not hold " +
                     std::to_string(values_.size()) + " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::rows() const { return shape_.empty() ? 1 : shape_.front(); }

std::size_t Tensor::cols() const {
  if (shape_.size() <= 1) return 1;
  return element_count(Shape(shape_.begin() + 1, shape_.end()));
}

double Tensor::item() const {
  if (values_.size() != 1)
    throw ShapeError("item() needs a single-element tensor, got " + shape_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.values_.size() != values_.size())
    throw ShapeError("cannot accumulate " + shape_string(other.shape_) + " into " +
                     shape_string(shape_));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::scale(double factor) {
  for (double& v : values_) v *= factor;
  return *this;
}

}  // namespace advreg
