#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace layerens::model {

enum class LossKind { generalized_dice, weighted_cross_entropy };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

/// Shape of the multi-head encoder-decoder.
///
/// Encoder block e has base_channels * 2^e channels; every block after the
/// first halves the resolution with a stride-2 convolution. Decoder blocks
/// mirror the encoder with concatenated skips. With `stem_downsample` the
/// first encoder block also halves the resolution and one extra decoder block
/// restores full resolution, giving 2 * depth heads instead of 2 * depth - 1.
struct ModelConfig {
  std::size_t depth = 3;
  std::size_t base_channels = 8;
  int num_classes = 1;  // foreground classes; 1 means binary with a sigmoid head
  std::size_t in_channels = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  bool stem_downsample = false;
  LossKind loss = LossKind::generalized_dice;
  std::vector<double> ce_weights;  // one per output class, background first
  std::uint64_t seed = 42;

  std::size_t output_channels() const;
  std::size_t num_encoder_blocks() const { return depth; }
  std::size_t num_decoder_blocks() const { return stem_downsample ? depth : depth - 1; }
  std::size_t num_heads() const { return num_encoder_blocks() + num_decoder_blocks(); }
  /// log2 of the downscale factor of the block feeding each head, shallowest first.
  std::vector<std::size_t> head_scales() const;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  /// Ten-head configuration with the layout of the reference architecture:
  /// five encoder and five decoder blocks on 256x256 inputs.
  static ModelConfig ten_head_reference();
};

}  // namespace layerens::model
