#pragma once

#include <random>

#include "layerens/data/dataset.hpp"

namespace layerens::data {

inline constexpr std::size_t kSwapPatchSize = 10;

/// Zero-mean unit-std rescaling of a whole image. Throws std::invalid_argument
/// on a constant image.
nn::Tensor normalize(const nn::Tensor& image);

// Geometric transforms act on image and mask together.
Sample flip_horizontal(const Sample& sample);
Sample flip_vertical(const Sample& sample);
/// Counter-clockwise rotation by quarter_turns * 90 degrees (square images).
Sample rotate90(const Sample& sample, int quarter_turns);

/// Exchanges two non-overlapping patch x patch regions of the image only.
nn::Tensor swap_patches(const nn::Tensor& image, std::size_t patch, std::mt19937_64& rng);

/// Random horizontal and vertical flips (p = 0.5 each), a random multiple of
/// 90 degrees rotation, then one 10x10 patch swap on the image.
Sample augment(const Sample& sample, std::mt19937_64& rng);

/// Adds i.i.d. Gaussian noise. Throws std::invalid_argument if std < 0.
nn::Tensor corrupt_gaussian(const nn::Tensor& image, double mean, double std, std::mt19937_64& rng);

/// Cross-correlation of every channel with a 2D kernel using reflect padding
/// (mirror without repeating the edge pixel).
nn::Tensor convolve_reflect(const nn::Tensor& image, const nn::Tensor& kernel);

/// Convolves with a random standard-normal kernel rescaled to sum 1, then
/// renormalises the image. Throws std::invalid_argument on an even size.
nn::Tensor corrupt_random_convolution(const nn::Tensor& image, std::size_t kernel_size, std::mt19937_64& rng);

}  // namespace layerens::data
