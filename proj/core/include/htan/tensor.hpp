#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace htan {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Rank-1 tensors are vectors, rank-2 tensors are matrices. Most primitives
/// operate on matrices; a vector participates in matrix arithmetic as a single
/// row (see `as_row`).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor row(std::vector<double> values) {
    const auto n = values.size();
    return matrix(1, n, std::move(values));
  }
  static Tensor identity(std::size_t n);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  /// Rows/cols of a rank-2 tensor; a rank-1 tensor reports 1 row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  /// Value of a one-element tensor.
  double item() const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& storage() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  /// Same data viewed as a 1×n matrix when rank 1; unchanged otherwise.
  Tensor as_row() const;
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  /// Bitwise equality of shape and values.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace htan
