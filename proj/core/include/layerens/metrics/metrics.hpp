#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "layerens/label_mask.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::metrics {

/// Physical pixel size along each axis.
struct Spacing {
  double y = 1.0;
  double x = 1.0;
};

/// Dice overlap of class `label` in two masks. Two empty sets give 1, one
/// empty set gives 0.
double dice(const LabelMask& a, const LabelMask& b, std::int32_t label = 1);

/// Pixels of class `label` with at least one 4-neighbour outside the class.
/// Neighbours beyond the image border count as outside.
std::vector<std::size_t> boundary_pixels(const LabelMask& mask, std::int32_t label);

/// Modified Hausdorff distance (Dubuisson-Jain) between the class boundaries:
/// max of the two mean directed boundary-to-boundary distances.
/// Empty on either side yields std::nullopt.
std::optional<double> mhd(const LabelMask& a, const LabelMask& b, std::int32_t label = 1, Spacing spacing = {});

/// Mean per-pixel -ln p(target) for a probability map [K',H,W]; one channel
/// means p(foreground). p(target) is clamped to [1e-7, 1 - 1e-7].
double nll(const nn::Tensor& prob, const LabelMask& target);

/// Average ranks (1-based), ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman's rank correlation. Needs equal lengths >= 3; std::nullopt when
/// either rank vector has zero variance.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Per-image scores. For K >= 2 the headline dsc/mhd average the per-class
/// values (mhd over the classes where it is defined).
struct MetricRecord {
  double dsc = 0.0;
  std::optional<double> mhd;
  double nll = 0.0;
  std::vector<double> class_dsc;
  std::vector<std::optional<double>> class_mhd;
};

MetricRecord evaluate(const LabelMask& prediction, const nn::Tensor& prob, const LabelMask& target,
                      Spacing spacing = {});

/// Mean and population standard deviation.
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

Summary summarize(std::span<const double> values);

}  // namespace layerens::metrics
