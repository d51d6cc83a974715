#pragma once

#include <span>
#include <vector>

#include "layerens/nn/autograd.hpp"
#include "layerens/nn/tensor.hpp"

namespace layerens::nn {

/// Output extent of a convolution along one axis, floor((n + 2p - k) / s) + 1.
/// Throws ShapeError when the kernel does not fit the padded input.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Cross-correlation of input [B,Cin,H,W] with kernel [Cout,Cin,k,k] plus a
/// per-output-channel bias. Zero padding, odd square kernels.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                      std::size_t padding);

Tensor upsample_nearest(const Tensor& input, std::size_t factor);
/// Keeps the top-left pixel of every factor x factor block.
Tensor downsample_nearest(const Tensor& input, std::size_t factor);

// Differentiable ops. Spatial ops expect [B,C,H,W].
Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t stride, std::size_t padding);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softmax_channels(const Var& x);
Var upsample(const Var& x, std::size_t factor);
Var downsample(const Var& x, std::size_t factor);
Var add(const Var& a, const Var& b);
Var multiply(const Var& a, const Var& b);
Var concat_channels(std::span<const Var> inputs);
Var sum(const Var& x);
/// sum_i coefficients[i] * inputs[i]; all inputs share one shape.
Var linear_combination(std::span<const Var> inputs, std::span<const double> coefficients);

/// Per-channel batch statistics captured by a training-mode batch_norm call.
struct BatchStatistics {
  std::vector<double> mean;
  std::vector<double> variance;  // biased, as used for normalisation
  std::size_t count = 0;         // elements per channel
};

/// Batch normalisation over (B,H,W) per channel.
///
/// In training mode the batch statistics normalise the input and are written
/// to `stats` when non-null; in evaluation mode the running statistics are
/// used and the op is a per-channel affine map.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
               const Tensor& running_var, bool training, double epsilon, BatchStatistics* stats = nullptr);

}  // namespace layerens::nn
