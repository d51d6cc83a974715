#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace layerens {

/// Thrown when tensor extents do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace nn {

using Shape = std::vector<std::size_t>;

/// Allocator returning cache-line aligned blocks. Vectorised kernels pick
/// their summation order from the address, so a fixed alignment keeps
/// results bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major array of doubles with shape metadata.
///
/// Images are stored as [C,H,W], batches and feature maps as [B,C,H,W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, const std::vector<double>& data);

  static Tensor scalar(double value) { return Tensor({1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Row-major accessors for rank-3 and rank-4 tensors.
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  double at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  void fill(double value);
  bool all_finite() const noexcept;
  double sum() const noexcept;

  /// Same data under a new shape with an equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// Copy of item `index` along the leading axis, with that axis dropped.
  Tensor slice(std::size_t index) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double factor);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static Tensor adopt(Shape shape, Buffer data);

  Shape shape_;
  Buffer data_;
};

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace nn
}  // namespace layerens
