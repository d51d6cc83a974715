#include <malloc.h>

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "layerens/cli/commands.hpp"
#include "layerens/error.hpp"
#include "layerens/nn/tensor.hpp"

namespace {

using Command = std::function<void(const layerens::cli::RunConfig&, const layerens::cli::CommandOptions&)>;

// Feature maps are a few MB each and are freed every step; keeping them on
// the heap instead of fresh mmaps avoids a page-fault storm while training.
void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Layer ensembles: multi-head segmentation with single-pass uncertainty"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  app.add_option("--config", config_path, "run configuration (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--checkpoint", checkpoint, "model checkpoint (default <out>/model.leckpt)");
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_option("--seed", seed, "seed for data, initialisation, training and corruption");
  app.add_option("--threads", threads, "workers for per-image inference")->check(CLI::PositiveNumber);

  const std::map<std::string, std::pair<std::string, Command>> commands{
      {"generate", {"write the synthetic dataset", layerens::cli::cmd_generate}},
      {"train", {"train and save a checkpoint", layerens::cli::cmd_train}},
      {"eval", {"per-image metrics and uncertainty on the test split", layerens::cli::cmd_eval}},
      {"qc", {"quality-control curves and correlation table", layerens::cli::cmd_qc}},
      {"pd", {"prediction-depth histograms under corruption", layerens::cli::cmd_pd}},
      {"sweep-skip", {"calibration and DSC for every skip", layerens::cli::cmd_sweep_skip}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    layerens::cli::RunConfig config;
    if (!config_path.empty()) config = layerens::cli::RunConfig::load(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    config.validate();

    layerens::cli::CommandOptions options;
    options.checkpoint = checkpoint;
    options.log = &std::cerr;
    const std::string name = app.get_subcommands().front()->get_name();
    commands.at(name).second(config, options);
  } catch (const layerens::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const layerens::ShapeError& e) {
    std::cerr << "shape mismatch: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
