#include "layerens/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace layerens::nn {

namespace {

// Row-major buffers read as column-major are their transposes. The conv GEMMs
// are phrased this way so the long pixel axis is the product's row count.
using ColMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using ColMap = Eigen::Map<ColMatrix>;
using ConstColMap = Eigen::Map<const ColMatrix>;

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw ShapeError(std::string(what) + ": expected [B,C,H,W], got " + to_string(t.shape()));
}

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel, stride, padding;
  std::size_t out_height, out_width;

  std::size_t patch_rows() const { return in_channels * kernel * kernel; }
  std::size_t out_pixels() const { return out_height * out_width; }
  std::size_t columns() const { return batch * out_pixels(); }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                           std::size_t padding) {
  require_rank4(input, "conv2d input");
  if (kernel.rank() != 4) throw ShapeError("conv2d kernel: expected [Cout,Cin,k,k], got " + to_string(kernel.shape()));
  const std::size_t k = kernel.dim(2);
  if (kernel.dim(3) != k) throw ShapeError("conv2d kernel must be square, got " + to_string(kernel.shape()));
  if (k % 2 == 0) throw ShapeError("conv2d kernel size must be odd, got " + std::to_string(k));
  if (kernel.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) + " do not match kernel " +
                     to_string(kernel.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
    throw ShapeError("conv2d bias: expected [" + std::to_string(kernel.dim(0)) + "], got " + to_string(bias.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), k, stride, padding, 0, 0};
  g.out_height = conv_output_extent(g.height, k, stride, padding);
  g.out_width = conv_output_extent(g.width, k, stride, padding);
  return g;
}

// Output columns [lo, hi) whose tap ox*stride + kx - pad lands inside [0, W).
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto off = static_cast<std::ptrdiff_t>(kx) - pad;
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t hi = W - off <= 0 ? 0 : (W - off - 1) / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(g.out_width));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Unfolds the patches of one image [Cin,H,W] into a (Cin*k*k) x (Ho*Wo)
// row-major matrix.
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t pixels = g.out_pixels();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* src = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* dst = cols + ((c * g.kernel + ky) * g.kernel + kx) * pixels;
        const auto [lo, hi] = valid_columns(g, kx);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t oy = 0; oy < g.out_height; ++oy, dst += g.out_width) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= H) {
            std::fill_n(dst, g.out_width, 0.0);
            continue;
          }
          const double* row = src + iy * static_cast<std::ptrdiff_t>(g.width);
          std::fill_n(dst, lo, 0.0);
          if (g.stride == 1) {
            std::copy(row + (static_cast<std::ptrdiff_t>(lo) + shift), row + (static_cast<std::ptrdiff_t>(hi) + shift),
                      dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = row[static_cast<std::ptrdiff_t>(ox * g.stride) + shift];
          }
          std::fill(dst + hi, dst + g.out_width, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col for one image.
void col2im_accumulate(const double* cols, const ConvGeometry& g, double* image_grad) {
  const std::size_t pixels = g.out_pixels();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* dst = image_grad + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* src = cols + ((c * g.kernel + ky) * g.kernel + kx) * pixels;
        const auto [lo, hi] = valid_columns(g, kx);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t oy = 0; oy < g.out_height; ++oy, src += g.out_width) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= H) continue;
          double* row = dst + iy * static_cast<std::ptrdiff_t>(g.width);
          if (g.stride == 1) {
            double* out = row + (static_cast<std::ptrdiff_t>(lo) + shift);
            const double* in = src + lo;
            for (std::size_t i = 0; i < hi - lo; ++i) out[i] += in[i];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) row[static_cast<std::ptrdiff_t>(ox * g.stride) + shift] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.padding == 0; }

// Reusable per-thread buffers. Patch matrices are rebuilt per image rather
// than kept alive for the backward pass, which keeps the working set small.
double* scratch(std::size_t slot, std::size_t count) {
  thread_local Buffer buffers[2];
  auto& buf = buffers[slot];
  if (buf.size() < count) buf.resize(count);
  return buf.data();
}

// Patch matrix (Cin*k*k) x (Ho*Wo) of image b. A 1x1 stride-1 conv reads its
// input directly.
const double* patches_of(const Tensor& input, const ConvGeometry& g, std::size_t b) {
  const double* image = input.data() + b * g.in_channels * g.height * g.width;
  if (is_pointwise(g)) return image;
  double* cols = scratch(0, g.patch_rows() * g.out_pixels());
  im2col(image, g, cols);
  return cols;
}

Tensor conv_forward_impl(const Tensor& input, const Tensor& kernel, const Tensor& bias, const ConvGeometry& g) {
  const auto rows = static_cast<Eigen::Index>(g.patch_rows());
  const auto pixels = static_cast<Eigen::Index>(g.out_pixels());
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  ConstColMap weights_t(kernel.data(), rows, cout);
  Tensor out({g.batch, g.out_channels, g.out_height, g.out_width});
  for (std::size_t b = 0; b < g.batch; ++b) {
    ColMap dst_t(out.data() + b * g.out_channels * g.out_pixels(), pixels, cout);
    for (Eigen::Index co = 0; co < cout; ++co) dst_t.col(co).setConstant(bias[static_cast<std::size_t>(co)]);
    dst_t.noalias() += ConstColMap(patches_of(input, g, b), pixels, rows) * weights_t;
  }
  return out;
}

void require_same(const Var& a, const Var& b, const char* what) { require_same_shape(a->value, b->value, what); }

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const std::size_t padded = input + 2 * padding;
  if (stride == 0 || padded < kernel) {
    throw ShapeError("conv2d: extent " + std::to_string(input) + " with kernel " + std::to_string(kernel) +
                     ", stride " + std::to_string(stride) + ", padding " + std::to_string(padding) +
                     " gives no output");
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                      std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, kernel, bias, stride, padding);
  return conv_forward_impl(input, kernel, bias, g);
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
  require_rank4(input, "upsample");
  if (factor == 0) throw ShapeError("upsample factor must be positive");
  if (factor == 1) return input;
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  Tensor out({B, C, H * factor, W * factor});
  const std::size_t Wo = W * factor;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = input.data() + bc * H * W;
    double* dst = out.data() + bc * H * W * factor * factor;
    for (std::size_t y = 0; y < H; ++y) {
      double* first = dst + y * factor * Wo;
      for (std::size_t x = 0; x < W; ++x) std::fill_n(first + x * factor, factor, src[y * W + x]);
      for (std::size_t r = 1; r < factor; ++r) std::copy_n(first, Wo, first + r * Wo);
    }
  }
  return out;
}

Tensor downsample_nearest(const Tensor& input, std::size_t factor) {
  require_rank4(input, "downsample");
  if (factor == 0) throw ShapeError("downsample factor must be positive");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % factor != 0 || W % factor != 0) {
    throw ShapeError("downsample: " + to_string(input.shape()) + " not divisible by " + std::to_string(factor));
  }
  const std::size_t Ho = H / factor, Wo = W / factor;
  Tensor out({B, C, Ho, Wo});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = input.data() + bc * H * W;
    double* dst = out.data() + bc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t x = 0; x < Wo; ++x) dst[y * Wo + x] = src[y * factor * W + x * factor];
    }
  }
  return out;
}

Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input->value, kernel->value, bias->value, stride, padding);
  Tensor out = conv_forward_impl(input->value, kernel->value, bias->value, g);
  return make_node(OpKind::conv2d, std::move(out), {input, kernel, bias}, [g](Node& self) {
    Node& in = *self.parents[0];
    Node& w = *self.parents[1];
    Node& b = *self.parents[2];
    const auto rows = static_cast<Eigen::Index>(g.patch_rows());
    const auto pixels = static_cast<Eigen::Index>(g.out_pixels());
    const auto cout = static_cast<Eigen::Index>(g.out_channels);
    const std::size_t out_block = g.out_channels * g.out_pixels();
    ConstColMap weights_t(w.value.data(), rows, cout);
    for (std::size_t bi = 0; bi < g.batch; ++bi) {
      ConstColMap grad_t(self.grad.data() + bi * out_block, pixels, cout);
      if (b.requires_grad) {
        ColMap db(b.grad_buffer().data(), 1, cout);
        db.noalias() += grad_t.colwise().sum();
      }
      if (w.requires_grad) {
        ColMap dw_t(w.grad_buffer().data(), rows, cout);
        dw_t.noalias() += ConstColMap(patches_of(in.value, g, bi), pixels, rows).transpose() * grad_t;
      }
      if (in.requires_grad) {
        double* image_grad = in.grad_buffer().data() + bi * g.in_channels * g.height * g.width;
        if (is_pointwise(g)) {
          ColMap(image_grad, pixels, rows).noalias() += grad_t * weights_t.transpose();
        } else {
          ColMap dcols_t(scratch(1, g.patch_rows() * g.out_pixels()), pixels, rows);
          dcols_t.noalias() = grad_t * weights_t.transpose();
          col2im_accumulate(dcols_t.data(), g, image_grad);
        }
      }
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_node(OpKind::relu, std::move(out), {x}, [](Node& self) {
    Node& in = *self.parents[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_node(OpKind::sigmoid, std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var softmax_channels(const Var& x) {
  require_rank4(x->value, "softmax");
  const std::size_t B = x->value.dim(0), C = x->value.dim(1), P = x->value.dim(2) * x->value.dim(3);
  Tensor out(x->value.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const double* src = x->value.data() + b * C * P;
    double* dst = out.data() + b * C * P;
    for (std::size_t p = 0; p < P; ++p) {
      double peak = src[p];
      for (std::size_t c = 1; c < C; ++c) peak = std::max(peak, src[c * P + p]);
      double total = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        dst[c * P + p] = std::exp(src[c * P + p] - peak);
        total += dst[c * P + p];
      }
      for (std::size_t c = 0; c < C; ++c) dst[c * P + p] /= total;
    }
  }
  return make_node(OpKind::softmax, std::move(out), {x}, [B, C, P](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < B; ++b) {
      const double* y = self.value.data() + b * C * P;
      const double* dy = self.grad.data() + b * C * P;
      double* dx = g.data() + b * C * P;
      for (std::size_t p = 0; p < P; ++p) {
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += dy[c * P + p] * y[c * P + p];
        for (std::size_t c = 0; c < C; ++c) dx[c * P + p] += y[c * P + p] * (dy[c * P + p] - dot);
      }
    }
  });
}

Var upsample(const Var& x, std::size_t factor) {
  Tensor out = upsample_nearest(x->value, factor);
  return make_node(OpKind::upsample, std::move(out), {x}, [factor](Node& self) {
    Node& in = *self.parents[0];
    Tensor& g = in.grad_buffer();
    const std::size_t BC = in.value.dim(0) * in.value.dim(1), H = in.value.dim(2), W = in.value.dim(3);
    const std::size_t Wo = W * factor;
    for (std::size_t bc = 0; bc < BC; ++bc) {
      const double* src = self.grad.data() + bc * H * W * factor * factor;
      double* dst = g.data() + bc * H * W;
      for (std::size_t yo = 0; yo < H * factor; ++yo) {
        double* row = dst + (yo / factor) * W;
        for (std::size_t xo = 0; xo < Wo; ++xo) row[xo / factor] += src[yo * Wo + xo];
      }
    }
  });
}

Var downsample(const Var& x, std::size_t factor) {
  Tensor out = downsample_nearest(x->value, factor);
  return make_node(OpKind::downsample, std::move(out), {x}, [factor](Node& self) {
    Node& in = *self.parents[0];
    Tensor& g = in.grad_buffer();
    const std::size_t BC = in.value.dim(0) * in.value.dim(1), W = in.value.dim(3);
    const std::size_t Ho = self.value.dim(2), Wo = self.value.dim(3), H = in.value.dim(2);
    for (std::size_t bc = 0; bc < BC; ++bc) {
      const double* src = self.grad.data() + bc * Ho * Wo;
      double* dst = g.data() + bc * H * W;
      for (std::size_t y = 0; y < Ho; ++y) {
        for (std::size_t xx = 0; xx < Wo; ++xx) dst[y * factor * W + xx * factor] += src[y * Wo + xx];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a->value;
  out += b->value;
  return make_node(OpKind::add, std::move(out), {a, b}, [](Node& self) {
    for (auto& parent : self.parents) {
      if (parent->requires_grad) parent->grad_buffer() += self.grad;
    }
  });
}

Var multiply(const Var& a, const Var& b) {
  require_same(a, b, "multiply");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_node(OpKind::multiply, std::move(out), {a, b}, [](Node& self) {
    Node& lhs = *self.parents[0];
    Node& rhs = *self.parents[1];
    if (lhs.requires_grad) {
      Tensor& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * rhs.value[i];
    }
    if (rhs.requires_grad) {
      Tensor& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * lhs.value[i];
    }
  });
}

Var concat_channels(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("concat of zero inputs");
  const Tensor& first = inputs.front()->value;
  require_rank4(first, "concat");
  const std::size_t B = first.dim(0), H = first.dim(2), W = first.dim(3), P = H * W;
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (const auto& in : inputs) {
    const Tensor& t = in->value;
    require_rank4(t, "concat");
    if (t.dim(0) != B || t.dim(2) != H || t.dim(3) != W) {
      throw ShapeError("concat: " + to_string(t.shape()) + " incompatible with " + to_string(first.shape()));
    }
    channels.push_back(t.dim(1));
    total += t.dim(1);
  }
  Tensor out({B, total, H, W});
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      std::copy_n(inputs[i]->value.data() + b * channels[i] * P, channels[i] * P, out.data() + (b * total + offset) * P);
      offset += channels[i];
    }
  }
  return make_node(OpKind::concat, std::move(out), {inputs.begin(), inputs.end()},
                   [channels, total, B, P](Node& self) {
                     for (std::size_t b = 0; b < B; ++b) {
                       std::size_t offset = 0;
                       for (std::size_t i = 0; i < channels.size(); ++i) {
                         Node& in = *self.parents[i];
                         if (in.requires_grad) {
                           const double* src = self.grad.data() + (b * total + offset) * P;
                           double* dst = in.grad_buffer().data() + b * channels[i] * P;
                           for (std::size_t j = 0; j < channels[i] * P; ++j) dst[j] += src[j];
                         }
                         offset += channels[i];
                       }
                     }
                   });
}

Var sum(const Var& x) {
  return make_node(OpKind::sum, Tensor::scalar(x->value.sum()), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const double upstream = self.grad[0];
    for (double& v : g.values()) v += upstream;
  });
}

Var linear_combination(std::span<const Var> inputs, std::span<const double> coefficients) {
  if (inputs.empty() || inputs.size() != coefficients.size()) {
    throw ShapeError("linear_combination: need one coefficient per input");
  }
  Tensor out(inputs.front()->value.shape(), 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    require_same_shape(out, inputs[i]->value, "linear_combination");
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += coefficients[i] * inputs[i]->value[j];
  }
  std::vector<double> coeffs(coefficients.begin(), coefficients.end());
  return make_node(OpKind::linear_combination, std::move(out), {inputs.begin(), inputs.end()},
                   [coeffs](Node& self) {
                     for (std::size_t i = 0; i < coeffs.size(); ++i) {
                       Node& in = *self.parents[i];
                       if (!in.requires_grad) continue;
                       Tensor& g = in.grad_buffer();
                       for (std::size_t j = 0; j < g.size(); ++j) g[j] += coeffs[i] * self.grad[j];
                     }
                   });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
               const Tensor& running_var, bool training, double epsilon, BatchStatistics* stats) {
  require_rank4(x->value, "batch_norm");
  const std::size_t B = x->value.dim(0), C = x->value.dim(1), P = x->value.dim(2) * x->value.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma->value, &beta->value, &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != C) {
      throw ShapeError("batch_norm: per-channel tensor " + to_string(t->shape()) + " for " + std::to_string(C) +
                       " channels");
    }
  }
  const double count = static_cast<double>(B * P);
  std::vector<double> mean(C), var(C), inv_std(C);
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* src = x->value.data() + (b * C + c) * P;
        for (std::size_t p = 0; p < P; ++p) s += src[p];
      }
      mean[c] = s / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* src = x->value.data() + (b * C + c) * P;
        for (std::size_t p = 0; p < P; ++p) sq += (src[p] - mean[c]) * (src[p] - mean[c]);
      }
      var[c] = sq / count;
    }
    if (stats) *stats = BatchStatistics{mean, var, B * P};
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + epsilon);

  auto normalized = std::make_shared<Tensor>(x->value.shape());
  Tensor out(x->value.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * P;
      for (std::size_t p = 0; p < P; ++p) {
        const double xhat = (x->value[base + p] - mean[c]) * inv_std[c];
        (*normalized)[base + p] = xhat;
        out[base + p] = gamma->value[c] * xhat + beta->value[c];
      }
    }
  }
  return make_node(OpKind::batchnorm, std::move(out), {x, gamma, beta},
                   [normalized, inv_std, training, B, C, P, count](Node& self) {
                     Node& in = *self.parents[0];
                     Node& g = *self.parents[1];
                     Node& bt = *self.parents[2];
                     for (std::size_t c = 0; c < C; ++c) {
                       double sum_dy = 0.0, sum_dy_xhat = 0.0;
                       for (std::size_t b = 0; b < B; ++b) {
                         const std::size_t base = (b * C + c) * P;
                         for (std::size_t p = 0; p < P; ++p) {
                           sum_dy += self.grad[base + p];
                           sum_dy_xhat += self.grad[base + p] * (*normalized)[base + p];
                         }
                       }
                       if (g.requires_grad) g.grad_buffer()[c] += sum_dy_xhat;
                       if (bt.requires_grad) bt.grad_buffer()[c] += sum_dy;
                       if (!in.requires_grad) continue;
                       const double scale = g.value[c] * inv_std[c];
                       Tensor& dx = in.grad_buffer();
                       for (std::size_t b = 0; b < B; ++b) {
                         const std::size_t base = (b * C + c) * P;
                         for (std::size_t p = 0; p < P; ++p) {
                           if (training) {
                             dx[base + p] += scale * (self.grad[base + p] - sum_dy / count -
                                                      (*normalized)[base + p] * sum_dy_xhat / count);
                           } else {
                             dx[base + p] += scale * self.grad[base + p];
                           }
                         }
                       }
                     }
                   });
}

}  // namespace layerens::nn
