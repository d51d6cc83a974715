#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "layerens/nn/tensor.hpp"

namespace layerens {

/// Integer label map [H,W]; 0 is background, 1..num_classes are foreground.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(std::size_t height, std::size_t width, int num_classes, std::int32_t fill = 0);
  LabelMask(std::size_t height, std::size_t width, int num_classes, std::vector<std::int32_t> labels);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }
  int num_classes() const noexcept { return num_classes_; }

  std::int32_t& operator()(std::size_t y, std::size_t x) { return labels_[y * width_ + x]; }
  std::int32_t operator()(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }
  std::int32_t operator[](std::size_t i) const { return labels_[i]; }
  std::int32_t& operator[](std::size_t i) { return labels_[i]; }

  std::span<const std::int32_t> labels() const noexcept { return labels_; }

  std::size_t count(std::int32_t label) const noexcept;
  bool same_shape(const LabelMask& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  /// Throws std::out_of_range when a label falls outside [0, num_classes].
  void validate() const;

  /// Binary mask of one class, itself labelled with a single class.
  LabelMask binary(std::int32_t label) const;

  /// Integer-valued [H,W] tensor, the on-disk representation.
  nn::Tensor to_tensor() const;
  static LabelMask from_tensor(const nn::Tensor& tensor, int num_classes);

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  int num_classes_ = 1;
  std::vector<std::int32_t> labels_;
};

/// Output channel count for `num_classes` foreground classes: one sigmoid
/// channel for binary tasks, background plus classes otherwise.
inline std::size_t output_channels(int num_classes) {
  return num_classes == 1 ? 1 : static_cast<std::size_t>(num_classes) + 1;
}

/// Per-channel target [K',H,W]; for binary tasks the single channel is the
/// foreground indicator.
nn::Tensor one_hot(const LabelMask& mask);

/// Hard labels from a probability map [K',H,W]: p >= 0.5 for one channel,
/// argmax (lowest index wins ties) otherwise.
LabelMask labels_from_probabilities(const nn::Tensor& probs);

}  // namespace layerens
