#include "layerens/model/head_outputs.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace layerens::model {

void HeadOutputs::validate(double tolerance) const {
  if (probs.empty()) throw std::invalid_argument("HeadOutputs: no heads");
  for (std::size_t h = 0; h < probs.size(); ++h) {
    const nn::Tensor& p = probs[h];
    if (p.rank() != 3) throw ShapeError("head " + std::to_string(h) + ": expected [K',H,W], got " + nn::to_string(p.shape()));
    if (p.shape() != probs.front().shape()) {
      throw ShapeError("head " + std::to_string(h) + " shape " + nn::to_string(p.shape()) + " differs from head 0");
    }
    const std::size_t channels = p.dim(0), pixels = p.dim(1) * p.dim(2);
    for (std::size_t i = 0; i < pixels; ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = p[c * pixels + i];
        if (!(v >= 0.0 && v <= 1.0)) {
          throw std::invalid_argument("head " + std::to_string(h) + ": probability out of [0,1]");
        }
        total += v;
      }
      if (channels > 1 && std::abs(total - 1.0) > tolerance) {
        throw std::invalid_argument("head " + std::to_string(h) + ": class probabilities do not sum to 1");
      }
    }
  }
}

void require_valid_skip(const HeadOutputs& outputs, std::size_t skip) {
  if (outputs.num_heads() < 2 || skip > outputs.num_heads() - 2) {
    throw std::invalid_argument("skip " + std::to_string(skip) + " leaves fewer than two of " +
                                std::to_string(outputs.num_heads()) + " heads");
  }
}

}  // namespace layerens::model
