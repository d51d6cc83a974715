#include "layerens/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace layerens::fusion {

FusedPrediction average_fuse(const model::HeadOutputs& outputs, std::size_t skip) {
  model::require_valid_skip(outputs, skip);
  // Offsets from the first used head, so identical heads average exactly.
  const nn::Tensor& first = outputs.probs[skip];
  nn::Tensor offset(first.shape(), 0.0);
  for (std::size_t h = skip; h < outputs.num_heads(); ++h) {
    require_same_shape(first, outputs.probs[h], "average_fuse");
    for (std::size_t i = 0; i < offset.size(); ++i) offset[i] += outputs.probs[h][i] - first[i];
  }
  nn::Tensor mean = first;
  const double inv = 1.0 / static_cast<double>(outputs.num_heads() - skip);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += offset[i] * inv;
  FusedPrediction fused;
  fused.label = labels_from_probabilities(mean);
  fused.prob = std::move(mean);
  fused.skip = skip;
  return fused;
}

namespace {

constexpr double kInitialPerformance = 0.99999;

void require_raters(std::span<const LabelMask> masks) {
  if (masks.size() < 2) throw std::invalid_argument("staple: need at least two raters");
  for (const auto& m : masks) {
    if (!m.same_shape(masks.front()) || m.size() == 0) {
      throw ShapeError("staple: rater masks must share one non-empty shape");
    }
  }
}

}  // namespace

StapleResult staple_fuse(std::span<const LabelMask> masks, const StapleOptions& options) {
  require_raters(masks);
  if (!(options.tolerance > 0.0) || options.max_iterations < 1) {
    throw std::invalid_argument("staple: tolerance must be positive and max_iterations >= 1");
  }
  const std::size_t raters = masks.size();
  const std::size_t pixels = masks.front().size();
  const std::size_t H = masks.front().height(), W = masks.front().width();

  // decisions[i * raters + j] is rater j's vote at pixel i.
  std::vector<unsigned char> decisions(pixels * raters);
  std::size_t votes = 0;
  for (std::size_t j = 0; j < raters; ++j) {
    for (std::size_t i = 0; i < pixels; ++i) {
      const bool fg = masks[j][i] != 0;
      decisions[i * raters + j] = fg;
      votes += fg;
    }
  }

  StapleResult result;
  result.posterior = nn::Tensor({H, W});
  if (votes == 0 || votes == pixels * raters) {
    result.posterior.fill(votes == 0 ? 0.0 : 1.0);
    result.sensitivity.assign(raters, 1.0);
    result.specificity.assign(raters, 1.0);
    result.converged = true;
    return result;
  }

  const double prior = static_cast<double>(votes) / static_cast<double>(pixels * raters);
  std::vector<double> p(raters, kInitialPerformance), q(raters, kInitialPerformance);
  double* posterior = result.posterior.data();

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    for (std::size_t i = 0; i < pixels; ++i) {
      double a = prior, b = 1.0 - prior;
      const unsigned char* d = decisions.data() + i * raters;
      for (std::size_t j = 0; j < raters; ++j) {
        if (d[j]) {
          a *= p[j];
          b *= 1.0 - q[j];
        } else {
          a *= 1.0 - p[j];
          b *= q[j];
        }
      }
      const double total = a + b;
      posterior[i] = total > 0.0 ? a / total : prior;
    }

    double change = 0.0;
    for (std::size_t j = 0; j < raters; ++j) {
      double fg_weight = 0.0, fg_hits = 0.0, bg_weight = 0.0, bg_hits = 0.0;
      for (std::size_t i = 0; i < pixels; ++i) {
        const double w = posterior[i];
        fg_weight += w;
        bg_weight += 1.0 - w;
        if (decisions[i * raters + j]) {
          fg_hits += w;
        } else {
          bg_hits += 1.0 - w;
        }
      }
      const double new_p = fg_weight > 0.0 ? fg_hits / fg_weight : p[j];
      const double new_q = bg_weight > 0.0 ? bg_hits / bg_weight : q[j];
      change = std::max(change, std::abs(new_p - p[j]) + std::abs(new_q - q[j]));
      p[j] = new_p;
      q[j] = new_q;
    }
    result.iterations = iter;
    if (change < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.sensitivity = std::move(p);
  result.specificity = std::move(q);
  return result;
}

StapleFusion staple_fuse_labels(std::span<const LabelMask> masks, const StapleOptions& options) {
  require_raters(masks);
  const int K = masks.front().num_classes();
  for (const auto& m : masks) {
    if (m.num_classes() != K) throw std::invalid_argument("staple: raters disagree on the class count");
  }
  const std::size_t H = masks.front().height(), W = masks.front().width(), pixels = H * W;
  StapleFusion fused;
  if (K == 1) {
    fused.per_class.push_back(staple_fuse(masks, options));
    const nn::Tensor& post = fused.per_class.front().posterior;
    fused.posterior = post.reshaped({1, H, W});
    fused.label = LabelMask(H, W, 1);
    for (std::size_t i = 0; i < pixels; ++i) fused.label[i] = post[i] >= 0.5 ? 1 : 0;
    return fused;
  }

  std::vector<LabelMask> binary(masks.size());
  for (std::int32_t c = 1; c <= K; ++c) {
    for (std::size_t j = 0; j < masks.size(); ++j) binary[j] = masks[j].binary(c);
    fused.per_class.push_back(staple_fuse(binary, options));
  }
  const std::size_t channels = static_cast<std::size_t>(K) + 1;
  fused.posterior = nn::Tensor({channels, H, W});
  fused.label = LabelMask(H, W, K);
  for (std::size_t i = 0; i < pixels; ++i) {
    double best = -1.0;
    std::int32_t best_class = 0;
    for (std::size_t c = 1; c < channels; ++c) {
      const double v = fused.per_class[c - 1].posterior[i];
      fused.posterior[c * pixels + i] = v;
      if (v > best) {
        best = v;
        best_class = static_cast<std::int32_t>(c);
      }
    }
    const double background = 1.0 - best;
    fused.posterior[i] = background;
    fused.label[i] = background >= best ? 0 : best_class;
  }
  return fused;
}

StapleFusion staple_fuse_heads(const model::HeadOutputs& outputs, std::size_t skip, const StapleOptions& options) {
  model::require_valid_skip(outputs, skip);
  std::vector<LabelMask> labels;
  labels.reserve(outputs.num_heads() - skip);
  for (std::size_t h = skip; h < outputs.num_heads(); ++h) labels.push_back(outputs.label(h));
  return staple_fuse_labels(labels, options);
}

}  // namespace layerens::fusion
