#include "bfa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace bfa {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape_) + " holds " +
                     std::to_string(shape_size(shape_)) + " elements, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                     shape_to_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t count) const {
  if (shape_.empty() || begin + count > shape_[0]) {
    throw ShapeError("row slice out of range for " + shape_to_string(shape_));
  }
  const std::size_t row = data_.size() / shape_[0];
  Shape shape = shape_;
  shape[0] = count;
  std::vector<double> data(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                           data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const {
  if (shape_.empty()) throw ShapeError("gather_rows on a scalar tensor");
  const std::size_t row = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape shape = shape_;
  shape[0] = rows.size();
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= shape_[0]) throw ShapeError("gather_rows index out of range");
    std::memcpy(out.data() + i * row, data_.data() + rows[i] * row, row * sizeof(double));
  }
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace bfa
