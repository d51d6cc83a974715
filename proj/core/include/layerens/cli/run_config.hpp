#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layerens/data/dataset.hpp"
#include "layerens/experiments/experiments.hpp"
#include "layerens/model/config.hpp"
#include "layerens/model/trainer.hpp"

namespace layerens::cli {

/// Everything one run needs, read from a flat `key = value` file.
///
/// `seed` and `threads` live at the top level and are copied into every
/// component; the image size and class count come from the data section.
struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "runs/default";
  std::size_t threads = 1;
  bool write_pgm = false;

  data::DatasetSpec data;
  model::ModelConfig model;
  model::TrainOptions train;
  experiments::ExperimentSettings experiment;

  data::DatasetSpec dataset_spec() const;
  model::ModelConfig model_config() const;
  model::TrainOptions train_options() const;
  experiments::ExperimentSettings experiment_settings() const;

  /// Throws ConfigError naming the first invalid key.
  void validate() const;

  /// Canonical text: every key, fixed order, doubles in shortest round-trip form.
  std::string to_text() const;

  /// Applies `key = value` lines on top of the defaults. Blank lines and
  /// `#` comments are ignored; unknown keys and malformed values throw
  /// ConfigError. Does not validate.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Every key in canonical order.
  static std::vector<std::string> keys();
};

}  // namespace layerens::cli
