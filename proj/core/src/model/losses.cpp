#include "layerens/model/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "layerens/nn/ops.hpp"

namespace layerens::model {

namespace {

void check_batch(const nn::Tensor& probs, const nn::Tensor& target, const char* what) {
  if (probs.rank() != 4) throw ShapeError(std::string(what) + ": probabilities must be [B,K',H,W], got " + nn::to_string(probs.shape()));
  nn::require_same_shape(probs, target, what);
}

}  // namespace

nn::Var generalized_dice_loss(const nn::Var& probs, const nn::Tensor& target) {
  check_batch(probs->value, target, "generalized_dice_loss");
  const nn::Tensor& p = probs->value;
  const std::size_t B = p.dim(0), K = p.dim(1), P = p.dim(2) * p.dim(3);

  // Per sample: class weights, numerator and denominator of the Dice ratio.
  std::vector<double> weights(B * K), numer(B), denom(B);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double max_weight = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double* t = target.data() + (b * K + k) * P;
      double volume = 0.0;
      for (std::size_t i = 0; i < P; ++i) volume += t[i];
      weights[b * K + k] = volume > 0.0 ? 1.0 / (volume * volume) : 0.0;
      max_weight = std::max(max_weight, weights[b * K + k]);
    }
    if (max_weight == 0.0) max_weight = 1.0;
    double n = 0.0, d = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double& w = weights[b * K + k];
      if (w == 0.0) w = max_weight;
      const double* pk = p.data() + (b * K + k) * P;
      const double* t = target.data() + (b * K + k) * P;
      double inter = 0.0, total = 0.0;
      for (std::size_t i = 0; i < P; ++i) {
        inter += pk[i] * t[i];
        total += pk[i] + t[i];
      }
      n += w * inter;
      d += w * total;
    }
    numer[b] = 2.0 * n + kDiceSmooth;
    denom[b] = d + kDiceSmooth;
    loss += 1.0 - numer[b] / denom[b];
  }
  loss /= static_cast<double>(B);

  return nn::make_node(nn::OpKind::loss, nn::Tensor::scalar(loss), {probs},
                       [target, weights, numer, denom, B, K, P](nn::Node& self) {
                         nn::Tensor& g = self.parents[0]->grad_buffer();
                         const double upstream = self.grad[0] / static_cast<double>(B);
                         for (std::size_t b = 0; b < B; ++b) {
                           const double n = numer[b], d = denom[b];
                           for (std::size_t k = 0; k < K; ++k) {
                             const double w = weights[b * K + k];
                             const double* t = target.data() + (b * K + k) * P;
                             double* gk = g.data() + (b * K + k) * P;
                             for (std::size_t i = 0; i < P; ++i) {
                               gk[i] -= upstream * (2.0 * w * t[i] * d - n * w) / (d * d);
                             }
                           }
                         }
                       });
}

nn::Var weighted_cross_entropy_loss(const nn::Var& probs, const nn::Tensor& target, std::span<const double> weights) {
  check_batch(probs->value, target, "weighted_cross_entropy_loss");
  const nn::Tensor& p = probs->value;
  const std::size_t B = p.dim(0), K = p.dim(1), P = p.dim(2) * p.dim(3);
  const std::size_t classes = K == 1 ? 2 : K;
  if (weights.size() != classes) {
    throw ShapeError("weighted_cross_entropy_loss: expected " + std::to_string(classes) + " class weights, got " +
                     std::to_string(weights.size()));
  }
  const double count = static_cast<double>(B * P);
  constexpr double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;

  // Target class index per pixel (binary maps: 1 where the indicator is set).
  std::vector<std::size_t> cls(B * P, 0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < P; ++i) {
      if (K == 1) {
        cls[b * P + i] = target[b * P + i] > 0.5 ? 1 : 0;
      } else {
        for (std::size_t k = 0; k < K; ++k) {
          if (target[(b * K + k) * P + i] > 0.5) cls[b * P + i] = k;
        }
      }
    }
  }
  auto target_probability = [&](std::size_t b, std::size_t i) {
    if (K == 1) {
      const double fg = p[b * P + i];
      return cls[b * P + i] == 1 ? fg : 1.0 - fg;
    }
    return p[(b * K + cls[b * P + i]) * P + i];
  };

  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < P; ++i) {
      loss -= weights[cls[b * P + i]] * std::log(std::clamp(target_probability(b, i), lo, hi));
    }
  }
  loss /= count;

  std::vector<double> w(weights.begin(), weights.end());
  return nn::make_node(nn::OpKind::loss, nn::Tensor::scalar(loss), {probs},
                       [cls = std::move(cls), w = std::move(w), B, K, P, count](nn::Node& self) {
                         nn::Node& in = *self.parents[0];
                         nn::Tensor& g = in.grad_buffer();
                         const double upstream = self.grad[0] / count;
                         for (std::size_t b = 0; b < B; ++b) {
                           for (std::size_t i = 0; i < P; ++i) {
                             const std::size_t c = cls[b * P + i];
                             if (K == 1) {
                               const double fg = in.value[b * P + i];
                               const double pt = c == 1 ? fg : 1.0 - fg;
                               if (pt <= lo || pt >= hi) continue;
                               const double sign = c == 1 ? -1.0 : 1.0;
                               g[b * P + i] += upstream * sign * w[c] / pt;
                             } else {
                               const std::size_t idx = (b * K + c) * P + i;
                               const double pt = in.value[idx];
                               if (pt <= lo || pt >= hi) continue;
                               g[idx] -= upstream * w[c] / pt;
                             }
                           }
                         }
                       });
}

nn::Var head_loss(const ModelConfig& config, const nn::Var& probs, const nn::Tensor& target) {
  if (config.loss == LossKind::generalized_dice) return generalized_dice_loss(probs, target);
  return weighted_cross_entropy_loss(probs, target, config.ce_weights);
}

nn::Var multi_head_loss(const ModelConfig& config, std::span<const nn::Var> heads, const nn::Tensor& target) {
  if (heads.empty()) throw std::invalid_argument("multi_head_loss: no heads");
  std::vector<nn::Var> losses;
  losses.reserve(heads.size());
  for (const auto& h : heads) losses.push_back(head_loss(config, h, target));
  const std::vector<double> coefficients(heads.size(), 1.0 / static_cast<double>(heads.size()));
  return nn::linear_combination(losses, coefficients);
}

}  // namespace layerens::model
