#include "layerens/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace layerens::nn {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, const std::vector<double>& data)
    : Tensor(adopt(std::move(shape), Buffer(data.begin(), data.end()))) {}

Tensor Tensor::adopt(Shape shape, Buffer data) {
  check_extents(shape);
  if (element_count(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(data.size()) + " elements");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const& { return adopt(std::move(shape), data_); }

Tensor Tensor::reshaped(Shape shape) && { return adopt(std::move(shape), std::move(data_)); }

Tensor Tensor::slice(std::size_t index) const {
  if (rank() < 2) throw ShapeError("slice needs rank >= 2, got " + to_string(shape_));
  if (index >= shape_[0]) throw ShapeError("slice index out of range for " + to_string(shape_));
  Shape inner(shape_.begin() + 1, shape_.end());
  const std::size_t stride = element_count(inner);
  Buffer part(data_.begin() + static_cast<std::ptrdiff_t>(index * stride),
              data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * stride));
  return adopt(std::move(inner), std::move(part));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double factor) {
  for (double& v : data_) v *= factor;
  return *this;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape shape = items.front().shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front().size());
  for (const auto& item : items) {
    if (item.shape() != shape) {
      throw ShapeError("stack: mismatched shapes " + to_string(shape) + " and " + to_string(item.shape()));
    }
    data.insert(data.end(), item.values().begin(), item.values().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor(std::move(shape), std::move(data));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

}  // namespace layerens::nn
