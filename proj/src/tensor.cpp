#include "drsn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace drsn {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " holds " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace drsn
