#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "layerens/label_mask.hpp"
#include "layerens/model/head_outputs.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::fusion {

/// Fused probability map [K',H,W] and its hard labels.
struct FusedPrediction {
  nn::Tensor prob;
  LabelMask label;
  std::size_t skip = 0;
};

/// Mean of heads skip..N-1, then threshold (one channel) or argmax.
FusedPrediction average_fuse(const model::HeadOutputs& outputs, std::size_t skip);

struct StapleOptions {
  double tolerance = 1e-6;
  int max_iterations = 100;
};

/// Binary STAPLE estimate.
///
/// `posterior` [H,W] is the foreground probability from the last E-step;
/// sensitivity[j] and specificity[j] are rater j's parameters after the last
/// M-step.
struct StapleResult {
  std::vector<double> sensitivity;
  std::vector<double> specificity;
  nn::Tensor posterior;
  int iterations = 0;
  bool converged = false;
};

/// EM over binary raters (any non-zero label counts as foreground).
///
/// Prior: mean foreground fraction across raters, spatially uniform.
/// Start: p = q = 0.99999. Stops once max_j |dp_j| + |dq_j| < tolerance.
/// All-empty or all-full input returns the unanimous mask with p = q = 1.
StapleResult staple_fuse(std::span<const LabelMask> masks, const StapleOptions& options = {});

/// Multi-class fusion result: per-class one-vs-rest runs plus the combined map.
struct StapleFusion {
  nn::Tensor posterior;  // [K',H,W]; for K >= 2 channel 0 is 1 - max of the class posteriors
  LabelMask label;
  std::vector<StapleResult> per_class;
};

/// STAPLE on label maps with K foreground classes. K = 1 runs the binary EM;
/// otherwise one binary run per class, then argmax with background first.
StapleFusion staple_fuse_labels(std::span<const LabelMask> masks, const StapleOptions& options = {});

/// Binarised heads skip..N-1 fused by STAPLE.
StapleFusion staple_fuse_heads(const model::HeadOutputs& outputs, std::size_t skip, const StapleOptions& options = {});

}  // namespace layerens::fusion
