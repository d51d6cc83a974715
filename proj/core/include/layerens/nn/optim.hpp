#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "layerens/nn/autograd.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place.
///
/// Moments are created on the first call. Throws std::domain_error naming the
/// offending parameter index if any gradient is non-finite; nothing is updated
/// in that case.
void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads);

/// Adam over graph parameters; a parameter without a gradient is stepped with
/// a zero gradient.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamOptions options = {});

  void step();
  void zero_grad();

  double learning_rate() const noexcept { return state_.options.learning_rate; }
  void set_learning_rate(double lr) noexcept { state_.options.learning_rate = lr; }
  const AdamState& state() const noexcept { return state_; }

 private:
  std::vector<Var> params_;
  AdamState state_;
};

struct PlateauOptions {
  double factor = 0.5;
  std::size_t patience = 5;
  double min_delta = 1e-4;
  double min_learning_rate = 0.0;
};

/// Halves (by `factor`) the learning rate once the best validation loss has
/// not improved by more than `min_delta` for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double learning_rate, PlateauOptions options = {});

  /// Records one epoch's validation loss; returns true if the rate was reduced.
  bool step(double validation_loss);

  double learning_rate() const noexcept { return lr_; }
  double best() const noexcept { return best_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }

 private:
  PlateauOptions options_;
  double lr_;
  double best_;
  std::size_t bad_epochs_ = 0;
  bool seen_any_ = false;
};

/// Learning rate after replaying a whole validation-loss history.
double reduce_lr_on_plateau(std::span<const double> history, double learning_rate, PlateauOptions options = {});

}  // namespace layerens::nn
