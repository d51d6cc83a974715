#pragma once

#include <functional>
#include <span>
#include <vector>

#include "layerens/data/dataset.hpp"
#include "layerens/model/network.hpp"
#include "layerens/nn/optim.hpp"

namespace layerens::model {

struct TrainOptions {
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  nn::PlateauOptions plateau;
  bool augment = true;
  std::uint64_t seed = 42;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  bool improved = false;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Network input for one sample: the normalised image.
nn::Tensor prepare_input(const data::Sample& sample);

struct Batch {
  nn::Tensor images;   // [B,C,H,W], normalised
  nn::Tensor targets;  // [B,K',H,W], one-hot
};
Batch make_batch(std::span<const data::Sample> samples);

/// Mean multi-head loss over `samples` in eval mode.
double evaluate_loss(const Network& network, std::span<const data::Sample> samples, std::size_t batch_size);

/// Adam on the unweighted mean of all head losses, learning-rate decay on
/// validation plateaus, and the best-validation-loss weights restored at the
/// end. Deterministic in (network seed, options.seed).
TrainingLog train(Network& network, std::span<const data::Sample> train_set, std::span<const data::Sample> val_set,
                  const TrainOptions& options, const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace layerens::model
