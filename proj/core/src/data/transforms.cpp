#include "layerens/data/transforms.hpp"

#include <cmath>
#include <stdexcept>

namespace layerens::data {

namespace {

void require_image(const nn::Tensor& image, const char* what) {
  if (image.rank() != 3) throw ShapeError(std::string(what) + ": expected [C,H,W], got " + nn::to_string(image.shape()));
}

// Applies a pixel-coordinate mapping (destination -> source) to image and mask.
template <typename Map>
Sample remap(const Sample& sample, std::size_t out_h, std::size_t out_w, Map&& source_of) {
  require_image(sample.image, "remap");
  const std::size_t C = sample.image.dim(0);
  Sample out;
  out.id = sample.id;
  out.tags = sample.tags;
  out.image = nn::Tensor({C, out_h, out_w});
  out.mask = LabelMask(out_h, out_w, sample.mask.num_classes());
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [sy, sx] = source_of(y, x);
      for (std::size_t c = 0; c < C; ++c) out.image.at(c, y, x) = sample.image.at(c, sy, sx);
      out.mask(y, x) = sample.mask(sy, sx);
    }
  }
  return out;
}

}  // namespace

nn::Tensor normalize(const nn::Tensor& image) {
  const double n = static_cast<double>(image.size());
  const double mean = image.sum() / n;
  double sq = 0.0;
  for (double v : image.values()) sq += (v - mean) * (v - mean);
  const double std = std::sqrt(sq / n);
  if (!(std > 1e-12)) throw std::invalid_argument("normalize: image has zero intensity variance");
  nn::Tensor out = image;
  for (double& v : out.values()) v = (v - mean) / std;
  return out;
}

Sample flip_horizontal(const Sample& sample) {
  const std::size_t H = sample.image.dim(1), W = sample.image.dim(2);
  return remap(sample, H, W, [W](std::size_t y, std::size_t x) { return std::pair{y, W - 1 - x}; });
}

Sample flip_vertical(const Sample& sample) {
  const std::size_t H = sample.image.dim(1), W = sample.image.dim(2);
  return remap(sample, H, W, [H](std::size_t y, std::size_t x) { return std::pair{H - 1 - y, x}; });
}

Sample rotate90(const Sample& sample, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  const std::size_t H = sample.image.dim(1), W = sample.image.dim(2);
  if (k == 0) return sample;
  if (k % 2 == 1 && H != W) throw ShapeError("rotate90: odd quarter turns need a square image");
  switch (k) {
    case 1:  // counter-clockwise: destination (y,x) reads source (x, W-1-y)
      return remap(sample, W, H, [W](std::size_t y, std::size_t x) { return std::pair{x, W - 1 - y}; });
    case 2:
      return remap(sample, H, W, [H, W](std::size_t y, std::size_t x) { return std::pair{H - 1 - y, W - 1 - x}; });
    default:
      return remap(sample, W, H, [H](std::size_t y, std::size_t x) { return std::pair{H - 1 - x, y}; });
  }
}

nn::Tensor swap_patches(const nn::Tensor& image, std::size_t patch, std::mt19937_64& rng) {
  require_image(image, "swap_patches");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (patch == 0 || 2 * patch > H || 2 * patch > W) return image;
  std::uniform_int_distribution<std::size_t> ys(0, H - patch), xs(0, W - patch);
  std::size_t ay, ax, by, bx;
  do {
    ay = ys(rng);
    ax = xs(rng);
    by = ys(rng);
    bx = xs(rng);
  } while (ay < by + patch && by < ay + patch && ax < bx + patch && bx < ax + patch);
  nn::Tensor out = image;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t dy = 0; dy < patch; ++dy) {
      for (std::size_t dx = 0; dx < patch; ++dx) {
        std::swap(out.at(c, ay + dy, ax + dx), out.at(c, by + dy, bx + dx));
      }
    }
  }
  return out;
}

Sample augment(const Sample& sample, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  Sample out = sample;
  if (coin(rng)) out = flip_horizontal(out);
  if (coin(rng)) out = flip_vertical(out);
  const int turns = std::uniform_int_distribution<int>(0, 3)(rng);
  if (turns) out = rotate90(out, turns);
  out.image = swap_patches(out.image, kSwapPatchSize, rng);
  return out;
}

nn::Tensor corrupt_gaussian(const nn::Tensor& image, double mean, double std, std::mt19937_64& rng) {
  if (!(std >= 0.0)) throw std::invalid_argument("corrupt_gaussian: std must be non-negative");
  nn::Tensor out = image;
  if (std == 0.0) {
    if (mean != 0.0) {
      for (double& v : out.values()) v += mean;
    }
    return out;
  }
  std::normal_distribution<double> noise(mean, std);
  for (double& v : out.values()) v += noise(rng);
  return out;
}

nn::Tensor convolve_reflect(const nn::Tensor& image, const nn::Tensor& kernel) {
  require_image(image, "convolve_reflect");
  if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0) {
    throw ShapeError("convolve_reflect: kernel must be odd square [k,k], got " + nn::to_string(kernel.shape()));
  }
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2), k = kernel.dim(0);
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  if (half >= static_cast<std::ptrdiff_t>(std::min(H, W))) throw ShapeError("convolve_reflect: kernel larger than image");
  auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  nn::Tensor out({C, H, W}, 0.0);
  const auto sH = static_cast<std::ptrdiff_t>(H), sW = static_cast<std::ptrdiff_t>(W);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::ptrdiff_t y = 0; y < sH; ++y) {
      for (std::ptrdiff_t x = 0; x < sW; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t ky = -half; ky <= half; ++ky) {
          const auto sy = static_cast<std::size_t>(reflect(y + ky, sH));
          for (std::ptrdiff_t kx = -half; kx <= half; ++kx) {
            const auto sx = static_cast<std::size_t>(reflect(x + kx, sW));
            acc += kernel[static_cast<std::size_t>((ky + half) * static_cast<std::ptrdiff_t>(k) + kx + half)] *
                   image.at(c, sy, sx);
          }
        }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
    }
  }
  return out;
}

nn::Tensor corrupt_random_convolution(const nn::Tensor& image, std::size_t kernel_size, std::mt19937_64& rng) {
  if (kernel_size % 2 == 0) throw std::invalid_argument("corrupt_random_convolution: kernel size must be odd");
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Tensor kernel({kernel_size, kernel_size});
  double total = 0.0;
  do {
    for (double& v : kernel.values()) v = normal(rng);
    total = kernel.sum();
  } while (std::abs(total) < 1e-6);
  kernel *= 1.0 / total;
  return normalize(convolve_reflect(image, kernel));
}

}  // namespace layerens::data
