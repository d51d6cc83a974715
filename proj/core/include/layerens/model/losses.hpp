#pragma once

#include <span>

#include "layerens/model/config.hpp"
#include "layerens/nn/autograd.hpp"

namespace layerens::model {

inline constexpr double kDiceSmooth = 1e-5;
inline constexpr double kProbabilityClamp = 1e-7;

/// Generalised Dice loss averaged over the batch.
///
/// probs and target are [B,K',H,W]; target is one-hot (the foreground
/// indicator when K' = 1). Per sample, with w_k = 1/(sum t_k)^2:
///   1 - (2 sum_k w_k sum p t + eps) / (sum_k w_k sum (p + t) + eps)
/// Classes absent from the target take the largest weight among present
/// classes (1 if none is present).
nn::Var generalized_dice_loss(const nn::Var& probs, const nn::Tensor& target);

/// Mean over pixels of -w_t log p_t with p clamped to [1e-7, 1 - 1e-7].
/// `weights` has one entry per class, background first; binary maps use
/// two weights (background, foreground).
nn::Var weighted_cross_entropy_loss(const nn::Var& probs, const nn::Tensor& target, std::span<const double> weights);

nn::Var head_loss(const ModelConfig& config, const nn::Var& probs, const nn::Tensor& target);

/// Unweighted mean of the per-head losses.
nn::Var multi_head_loss(const ModelConfig& config, std::span<const nn::Var> heads, const nn::Tensor& target);

}  // namespace layerens::model
