#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "layerens/label_mask.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::data {

/// One grayscale image [1,H,W] with its label map.
struct Sample {
  nn::Tensor image;
  LabelMask mask;
  std::string id;
  std::set<std::string> tags;

  bool has_tag(const std::string& tag) const { return tags.count(tag) > 0; }
};

enum class Split { train, val, test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Recipe for a synthetic segmentation dataset.
///
/// num_classes = 1 draws one centred ellipse ("lesion") on a textured
/// background. num_classes = 3 draws a disc (1) inside a ring (2) with an
/// adjacent crescent blob (3), a short-axis cardiac-like layout. A fraction of
/// samples gets a much weaker foreground contrast and is tagged "low-contrast".
struct DatasetSpec {
  std::size_t train_count = 500;
  std::size_t val_count = 100;
  std::size_t test_count = 150;
  std::size_t image_size = 64;
  int num_classes = 1;
  double contrast_min = 0.35;
  double contrast_max = 0.6;
  double low_contrast_min = 0.04;
  double low_contrast_max = 0.14;
  double low_contrast_fraction = 0.25;
  double noise_std = 0.1;
  std::uint64_t seed = 42;

  /// Throws ConfigError naming the invalid field.
  void validate() const;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;

  const std::vector<Sample>& split(Split s) const;
};

/// Deterministic in (spec, seed); every sample draws from its own stream
/// derived from (seed, split, index), so splits never share randomness.
Dataset generate(const DatasetSpec& spec);
Sample generate_sample(const DatasetSpec& spec, Split split, std::size_t index);

/// Seeded stream for a (seed, purpose, index) triple.
std::mt19937_64 derived_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index);

}  // namespace layerens::data
