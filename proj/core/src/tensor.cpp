#include "htan/tensor.hpp"

#include <cmath>
#include <cstring>

#include "htan/errors.hpp"

namespace htan {

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
void check_dims(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  check_dims(shape_);
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor of shape " + shape_to_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                     " values, got " + std::to_string(values_.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw ShapeError("rows() needs rank 1 or 2, got " + shape_to_string(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw ShapeError("cols() needs rank 1 or 2, got " + shape_to_string(shape_));
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  return values_[0];
}

Tensor Tensor::as_row() const {
  if (shape_.size() == 1) return Tensor({1, shape_[0]}, values_);
  return *this;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_) return false;
  return a.values_.empty() ||
         std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(double)) == 0;
}

}  // namespace htan
