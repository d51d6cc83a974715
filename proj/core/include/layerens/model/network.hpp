#pragma once

#include <filesystem>
#include <vector>

#include "layerens/model/config.hpp"
#include "layerens/model/head_outputs.hpp"
#include "layerens/nn/autograd.hpp"
#include "layerens/nn/checkpoint.hpp"
#include "layerens/nn/ops.hpp"

namespace layerens::model {

enum class Mode { train, eval };

/// U-Net style encoder-decoder with one segmentation head after every block.
///
/// Head t only reads blocks 0..t in construction order, so the sub-network
/// of head t is a prefix of the sub-network of head t+1. Inference through a
/// const Network is read-only and may run concurrently from several threads.
class Network {
 public:
  explicit Network(ModelConfig config);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t num_heads() const noexcept { return heads_.size(); }

  /// Graph-recording forward over a batch [B,C,H,W]; one probability node
  /// [B,K',H,W] per head. Train mode normalises with batch statistics and
  /// updates the running statistics.
  std::vector<nn::Var> forward(const nn::Tensor& batch, Mode mode);

  /// Single eval-mode pass producing all head maps for one image [C,H,W].
  HeadOutputs forward_all_heads(const nn::Tensor& image) const;
  std::vector<HeadOutputs> forward_all_heads_batch(const nn::Tensor& batch) const;

  /// Eval-mode pass through the blocks feeding `head` and that head only.
  nn::Tensor forward_single_head(const nn::Tensor& image, std::size_t head) const;

  /// Trainable parameters in construction order.
  std::vector<nn::Var> parameters() const;

  /// Parameters and batch-norm running statistics, construction order.
  std::vector<nn::NamedTensor> state() const;
  /// Throws ShapeError naming the entry when a shape or name does not match.
  void load_state(const std::vector<nn::NamedTensor>& state);

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  /// Names of the parameters that feed head `head` and nothing shallower.
  std::vector<std::string> parameters_owned_by_head(std::size_t head) const;

  static constexpr double kBatchNormMomentum = 0.9;
  static constexpr double kBatchNormEpsilon = 1e-5;

 private:
  struct Conv {
    nn::Var weight;
    nn::Var bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
  };
  struct BatchNorm {
    nn::Var gamma;
    nn::Var beta;
    nn::Tensor running_mean;
    nn::Tensor running_var;
    std::string name;
  };
  struct EncoderBlock {
    Conv conv1, conv2, shortcut;
    BatchNorm bn1, bn2;
  };
  struct DecoderBlock {
    Conv conv1, conv2;
    BatchNorm bn1, bn2;
    int skip_from = -1;  // encoder index concatenated after upsampling, -1 for none
  };
  struct Head {
    Conv conv;
    std::size_t upsample_factor = 1;
    std::size_t block = 0;
  };
  struct Pass {
    std::vector<nn::Var> heads;
    std::vector<nn::BatchStatistics> stats;  // in batch_norms_ order, train mode only
  };

  Pass run(const nn::Var& input, Mode mode, std::size_t last_head, bool only_last) const;
  nn::Var batch_norm(const nn::Var& x, const BatchNorm& bn, Mode mode, Pass& pass) const;
  nn::Var head_probabilities(const nn::Var& features, const Head& head) const;
  void check_input(const nn::Tensor& batch) const;

  ModelConfig config_;
  std::vector<EncoderBlock> encoders_;
  std::vector<DecoderBlock> decoders_;
  std::vector<Head> heads_;
  std::vector<BatchNorm*> batch_norms_;
  std::vector<nn::Var> params_;
  std::vector<std::vector<std::string>> owned_by_head_;
};

}  // namespace layerens::model
