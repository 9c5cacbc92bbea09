#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mimnet {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Every op in the library works on rank-2 tensors; vectors are stored as
/// column matrices (n x 1). Higher ranks are accepted for storage only.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }
  static Tensor column(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_matrix() const { return shape_.size() == 2; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  bool all_finite() const;
  void fill(double v);
  Tensor reshaped(Shape shape) const;

  /// Copy of row r as a column vector.
  Tensor row(std::size_t r) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

/// Bitwise comparison; distinguishes -0.0 from 0.0 and compares NaN payloads.
bool bit_identical(const Tensor& a, const Tensor& b);

}  // namespace mimnet
