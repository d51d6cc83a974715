#pragma once

#include <cstddef>
#include <vector>

#include "layerens/label_mask.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::model {

/// Per-head class-probability maps for one image, shallowest head first.
/// Every map is [K',H,W] at input resolution.
struct HeadOutputs {
  std::vector<nn::Tensor> probs;

  std::size_t num_heads() const noexcept { return probs.size(); }
  std::size_t channels() const { return probs.at(0).dim(0); }
  std::size_t height() const { return probs.at(0).dim(1); }
  std::size_t width() const { return probs.at(0).dim(2); }
  int num_classes() const { return channels() == 1 ? 1 : static_cast<int>(channels()) - 1; }

  LabelMask label(std::size_t head) const { return labels_from_probabilities(probs.at(head)); }

  /// Checks shapes agree and every map is a valid probability map
  /// (sums to 1 within tolerance, or lies in [0,1] for one channel).
  void validate(double tolerance = 1e-6) const;
};

/// Throws std::invalid_argument unless at least two heads remain after skipping.
void require_valid_skip(const HeadOutputs& outputs, std::size_t skip);

}  // namespace layerens::model
