#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "layerens/data/dataset.hpp"
#include "layerens/metrics/metrics.hpp"
#include "layerens/model/head_outputs.hpp"
#include "layerens/model/network.hpp"
#include "layerens/uncertainty/uncertainty.hpp"

namespace layerens::experiments {

enum class Corruption { gaussian, random_convolution };

std::string to_string(Corruption kind);
Corruption parse_corruption(const std::string& text);

struct ExperimentSettings {
  std::size_t skip = 1;
  double agreement_threshold = uncertainty::kDefaultAgreementThreshold;
  double poor_threshold = 0.90;
  std::size_t qc_grid_points = 101;
  Corruption corruption = Corruption::gaussian;
  double noise_mean = 0.3;
  double noise_std = 0.7;
  std::size_t random_conv_kernel = 9;
  std::vector<double> corruption_fractions{0.0, 0.5, 1.0};
  metrics::Spacing spacing;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

/// Head outputs for each sample (image normalised first), in input order.
/// Work is split over `threads` workers; results do not depend on it.
std::vector<model::HeadOutputs> infer(const model::Network& network, std::span<const nn::Tensor> images,
                                      std::size_t threads = 1);
std::vector<model::HeadOutputs> infer(const model::Network& network, std::span<const data::Sample> samples,
                                      std::size_t threads = 1);

/// Everything measured on one image. Segmentation scores use the STAPLE
/// labels; NLL uses the averaged probabilities of the same heads. With
/// skip = N-1 the last head is used alone and AULA is NaN.
struct ImageEvaluation {
  std::string id;
  std::set<std::string> tags;
  metrics::MetricRecord metrics;
  uncertainty::UncertaintyReport report;  // maps dropped, scalars and curve kept
};

ImageEvaluation evaluate_image(const data::Sample& sample, const model::HeadOutputs& heads,
                               const ExperimentSettings& settings);
std::vector<ImageEvaluation> evaluate_images(std::span<const data::Sample> samples,
                                             std::span<const model::HeadOutputs> heads,
                                             const ExperimentSettings& settings);

struct QcCurve {
  std::vector<double> fractions;
  std::vector<double> remaining;  // flagging by the supplied uncertainty
  std::vector<double> random;     // 1 - f
  std::vector<double> ideal;      // poor cases flagged first
  double auc = 0.0;
  double random_auc = 0.0;
  double ideal_auc = 0.0;
  double poor_threshold = 0.90;
  std::size_t poor_count = 0;
  bool no_poor_cases = false;
};

/// Flags the ceil(f * n) most uncertain images at each of `grid_points`
/// evenly spaced fractions (ties: lower index first) and tracks the share
/// of poor images (dsc < poor_threshold) left unflagged.
QcCurve qc_curve(std::span<const double> uncertainties, std::span<const double> dscs, double poor_threshold = 0.90,
                 std::size_t grid_points = 101);

struct CorrelationRow {
  std::string uncertainty;
  std::string segmentation;
  std::optional<double> rho;
  std::size_t count = 0;
};

/// Spearman correlation of {entropy_sum, mi_sum, variance_sum, aula} with
/// {dsc, mhd}; images with undefined mhd are left out of the mhd rows.
std::vector<CorrelationRow> correlation_table(std::span<const ImageEvaluation> evaluations);

struct SweepRow {
  std::size_t skip = 0;
  bool plain = false;  // skip = N-1: last head alone
  metrics::Summary nll;
  metrics::Summary dsc;
};

/// Averaging-fused NLL and DSC for every skip in 0..N-1.
std::vector<SweepRow> calibration_sweep(std::span<const data::Sample> samples,
                                        std::span<const model::HeadOutputs> heads);

struct PdHistogram {
  double fraction = 0.0;
  std::vector<std::size_t> counts;  // index = prediction depth, 0..N-1
  double mean = 0.0;
  std::size_t corrupted = 0;
};

/// Indices of the images corrupted at `fraction`: the first ceil(f * n) of
/// one seeded permutation, so larger fractions contain smaller ones.
std::vector<std::size_t> corrupted_subset(std::size_t n, double fraction, std::uint64_t seed);

/// Normalised image with the configured corruption applied (index seeds the
/// noise stream).
nn::Tensor corrupt(const nn::Tensor& normalized, std::size_t index, const ExperimentSettings& settings);

std::vector<PdHistogram> pd_shift(const model::Network& network, std::span<const data::Sample> samples,
                                  const ExperimentSettings& settings);

struct SummaryTable {
  metrics::Summary dsc;
  metrics::Summary mhd;  // over images where it is defined
  std::size_t mhd_undefined = 0;
  metrics::Summary nll;
  std::vector<metrics::Summary> class_dsc;
  std::vector<metrics::Summary> class_mhd;
  std::vector<std::size_t> class_mhd_undefined;
};

SummaryTable summary_table(std::span<const ImageEvaluation> evaluations);

}  // namespace layerens::experiments
