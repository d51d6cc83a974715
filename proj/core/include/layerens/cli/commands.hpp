#pragma once

#include <filesystem>
#include <iosfwd>

#include "layerens/cli/run_config.hpp"

namespace layerens::cli {

struct CommandOptions {
  std::filesystem::path checkpoint;  // empty: <output_dir>/model.leckpt
  std::ostream* log = nullptr;       // progress lines; nullptr for silence
};

std::filesystem::path checkpoint_path(const RunConfig& config, const CommandOptions& options);

/// Dataset under <output_dir>/data when present, otherwise regenerated in
/// memory from the config. Throws when the stored data disagrees with it.
data::Dataset load_or_generate(const RunConfig& config);

/// Writes <output_dir>/data: manifest.csv and one tensor file per image/mask.
void cmd_generate(const RunConfig& config, const CommandOptions& options = {});
/// Checkpoint, train_log.csv, train_summary.json.
void cmd_train(const RunConfig& config, const CommandOptions& options = {});
/// eval_images.csv, eval_summary.csv, eval_summary.json.
void cmd_eval(const RunConfig& config, const CommandOptions& options = {});
/// qc_curves.csv, qc_correlations.csv, qc_summary.json.
void cmd_qc(const RunConfig& config, const CommandOptions& options = {});
/// pd_histograms.csv, pd_summary.json.
void cmd_pd(const RunConfig& config, const CommandOptions& options = {});
/// sweep_skip.csv, sweep_summary.json.
void cmd_sweep_skip(const RunConfig& config, const CommandOptions& options = {});

}  // namespace layerens::cli
