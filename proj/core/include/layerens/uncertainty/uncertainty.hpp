#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "layerens/model/head_outputs.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::uncertainty {

inline constexpr double kDefaultAgreementThreshold = 0.90;

/// Clamp applied to probabilities before any logarithm.
inline constexpr double kLogClamp = 1e-7;

/// Per-pixel population variance of the head probabilities over heads
/// skip..N-1; for several channels, the mean of the per-channel variances.
nn::Tensor pixel_variance(const model::HeadOutputs& outputs, std::size_t skip);

/// Entropy (nats) of the mean head probability. One channel is treated as a
/// Bernoulli pair.
nn::Tensor pixel_entropy(const model::HeadOutputs& outputs, std::size_t skip);

/// Entropy of the mean minus the mean per-head entropy, clipped at 0.
nn::Tensor pixel_mutual_information(const model::HeadOutputs& outputs, std::size_t skip);

/// Dice agreement between adjacent binarised heads:
/// agreements[i] compares heads skip+i and skip+i+1. Several classes average
/// the per-class Dice over the foreground classes.
struct LayerAgreementCurve {
  std::vector<double> agreements;
  std::size_t skip = 0;
  double threshold = kDefaultAgreementThreshold;
};

LayerAgreementCurve layer_agreement_curve(const model::HeadOutputs& outputs, std::size_t skip,
                                          double threshold = kDefaultAgreementThreshold);

/// Trapezoid area under the curve at unit spacing, divided by (length - 1).
/// High AULA means the heads agree, i.e. low uncertainty.
double aula(const LayerAgreementCurve& curve);

/// Absolute index of the deepest head whose agreement with its predecessor
/// is below the threshold; skip when no agreement is below it.
std::size_t prediction_depth(const LayerAgreementCurve& curve);

struct UncertaintyReport {
  nn::Tensor variance_map;
  nn::Tensor entropy_map;
  nn::Tensor mi_map;
  double variance_sum = 0.0;
  double entropy_sum = 0.0;
  double mi_sum = 0.0;
  LayerAgreementCurve curve;
  double aula = 0.0;
  std::size_t prediction_depth = 0;
};

/// AULA is NaN when the curve has a single point (skip = N-2).
UncertaintyReport build_report(const model::HeadOutputs& outputs, std::size_t skip,
                               double threshold = kDefaultAgreementThreshold);

/// One CSV row per image: id, the scalar fields, then the agreements joined
/// by ';'.
std::string report_csv_header();
std::string report_csv_row(const std::string& id, const UncertaintyReport& report);

/// Scalar fields and the curve as a JSON object (maps omitted).
std::string report_json(const UncertaintyReport& report);

}  // namespace layerens::uncertainty
