#include "mimnet/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "mimnet/error.hpp"

namespace mimnet {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_to_string(shape_) + " does not hold " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::column(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n, 1}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : data_.size() / shape_[0];
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out(std::move(shape), data_);
  out.requires_grad_ = requires_grad_;
  return out;
}

Tensor Tensor::row(std::size_t r) const {
  const auto c = cols();
  if (r >= rows()) throw DimensionError("row " + std::to_string(r) + " out of range for " + shape_to_string(shape_));
  return Tensor::column(std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * c),
                                            data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace mimnet
