#include "layerens/label_mask.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace layerens {

LabelMask::LabelMask(std::size_t height, std::size_t width, int num_classes, std::int32_t fill)
    : height_(height), width_(width), num_classes_(num_classes), labels_(height * width, fill) {
  if (num_classes < 1) throw std::invalid_argument("LabelMask: num_classes must be >= 1");
  validate();
}

LabelMask::LabelMask(std::size_t height, std::size_t width, int num_classes, std::vector<std::int32_t> labels)
    : height_(height), width_(width), num_classes_(num_classes), labels_(std::move(labels)) {
  if (num_classes < 1) throw std::invalid_argument("LabelMask: num_classes must be >= 1");
  if (labels_.size() != height * width) {
    throw ShapeError("LabelMask: " + std::to_string(labels_.size()) + " labels for " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  validate();
}

std::size_t LabelMask::count(std::int32_t label) const noexcept {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

void LabelMask::validate() const {
  for (auto v : labels_) {
    if (v < 0 || v > num_classes_) {
      throw std::out_of_range("label " + std::to_string(v) + " outside [0," + std::to_string(num_classes_) + "]");
    }
  }
}

LabelMask LabelMask::binary(std::int32_t label) const {
  LabelMask out(height_, width_, 1);
  for (std::size_t i = 0; i < labels_.size(); ++i) out.labels_[i] = labels_[i] == label ? 1 : 0;
  return out;
}

nn::Tensor LabelMask::to_tensor() const {
  nn::Tensor t({height_, width_});
  for (std::size_t i = 0; i < labels_.size(); ++i) t[i] = static_cast<double>(labels_[i]);
  return t;
}

LabelMask LabelMask::from_tensor(const nn::Tensor& tensor, int num_classes) {
  if (tensor.rank() != 2) throw ShapeError("mask tensor must be [H,W], got " + nn::to_string(tensor.shape()));
  std::vector<std::int32_t> labels(tensor.size());
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    const double v = tensor[i];
    if (v != std::round(v)) throw std::invalid_argument("mask tensor holds a non-integer value");
    labels[i] = static_cast<std::int32_t>(v);
  }
  return LabelMask(tensor.dim(0), tensor.dim(1), num_classes, std::move(labels));
}

nn::Tensor one_hot(const LabelMask& mask) {
  const std::size_t channels = output_channels(mask.num_classes());
  const std::size_t pixels = mask.size();
  nn::Tensor t({channels, mask.height(), mask.width()}, 0.0);
  for (std::size_t i = 0; i < pixels; ++i) {
    if (channels == 1) {
      t[i] = mask[i] > 0 ? 1.0 : 0.0;
    } else {
      t[static_cast<std::size_t>(mask[i]) * pixels + i] = 1.0;
    }
  }
  return t;
}

LabelMask labels_from_probabilities(const nn::Tensor& probs) {
  if (probs.rank() != 3) throw ShapeError("probability map must be [K',H,W], got " + nn::to_string(probs.shape()));
  const std::size_t channels = probs.dim(0), H = probs.dim(1), W = probs.dim(2), pixels = H * W;
  const int num_classes = channels == 1 ? 1 : static_cast<int>(channels) - 1;
  LabelMask out(H, W, num_classes);
  for (std::size_t i = 0; i < pixels; ++i) {
    if (channels == 1) {
      out[i] = probs[i] >= 0.5 ? 1 : 0;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < channels; ++c) {
      if (probs[c * pixels + i] > probs[best * pixels + i]) best = c;
    }
    out[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

}  // namespace layerens
