#include "layerens/model/config.hpp"

#include "layerens/error.hpp"
#include "layerens/label_mask.hpp"

namespace layerens::model {

std::string to_string(LossKind kind) {
  return kind == LossKind::generalized_dice ? "generalized_dice" : "weighted_cross_entropy";
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "generalized_dice") return LossKind::generalized_dice;
  if (text == "weighted_cross_entropy") return LossKind::weighted_cross_entropy;
  throw ConfigError("model.loss", "unknown loss '" + text + "' (generalized_dice | weighted_cross_entropy)");
}

std::size_t ModelConfig::output_channels() const { return layerens::output_channels(num_classes); }

std::vector<std::size_t> ModelConfig::head_scales() const {
  std::vector<std::size_t> scales;
  const std::size_t offset = stem_downsample ? 1 : 0;
  for (std::size_t e = 0; e < depth; ++e) scales.push_back(e + offset);
  for (std::size_t d = 0; d + 1 < depth; ++d) scales.push_back(depth - 2 - d + offset);
  if (stem_downsample) scales.push_back(0);
  return scales;
}

void ModelConfig::validate() const {
  if (depth < 2) throw ConfigError("model.depth", "must be >= 2, got " + std::to_string(depth));
  if (depth > 8) throw ConfigError("model.depth", "must be <= 8, got " + std::to_string(depth));
  if (base_channels == 0) throw ConfigError("model.base_channels", "must be positive");
  if (num_classes < 1) throw ConfigError("model.num_classes", "must be >= 1");
  if (in_channels == 0) throw ConfigError("model.in_channels", "must be positive");
  const std::size_t deepest = depth - 1 + (stem_downsample ? 1 : 0);
  const std::size_t multiple = std::size_t{1} << deepest;
  if (height == 0 || height % multiple != 0) {
    throw ConfigError("model.height", std::to_string(height) + " is not divisible by " + std::to_string(multiple));
  }
  if (width == 0 || width % multiple != 0) {
    throw ConfigError("model.width", std::to_string(width) + " is not divisible by " + std::to_string(multiple));
  }
  if (loss == LossKind::weighted_cross_entropy) {
    const std::size_t classes = num_classes == 1 ? 2 : static_cast<std::size_t>(num_classes) + 1;
    if (ce_weights.size() != classes) {
      throw ConfigError("model.ce_weights", "expected " + std::to_string(classes) + " weights (background first), got " +
                                                std::to_string(ce_weights.size()));
    }
    for (double w : ce_weights) {
      if (!(w >= 0.0)) throw ConfigError("model.ce_weights", "weights must be non-negative");
    }
  }
}

ModelConfig ModelConfig::ten_head_reference() {
  ModelConfig c;
  c.depth = 5;
  c.base_channels = 16;
  c.height = 256;
  c.width = 256;
  c.stem_downsample = true;
  return c;
}

}  // namespace layerens::model
