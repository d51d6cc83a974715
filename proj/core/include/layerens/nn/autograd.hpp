#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "layerens/nn/tensor.hpp"

namespace layerens::nn {

enum class OpKind {
  leaf,
  conv2d,
  relu,
  sigmoid,
  softmax,
  upsample,
  downsample,
  add,
  concat,
  batchnorm,
  linear_combination,
  multiply,
  sum,
  loss,
};

const char* to_string(OpKind kind);

class Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the define-by-run compute graph.
///
/// Interior nodes own their forward value and keep their parents alive until
/// the graph is dropped. Leaves are either constants or trainable parameters.
class Node {
 public:
  Tensor value;
  Tensor grad;  // empty until a gradient flows in
  OpKind kind = OpKind::leaf;
  bool requires_grad = false;
  std::string name;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient storage, zero-initialised on first access.
  Tensor& grad_buffer();
  void zero_grad() { grad = Tensor(); }
};

Var constant(Tensor value);
Var parameter(Tensor value, std::string name);

/// Creates an op node. Parents and the backward closure are only retained
/// when gradient recording is enabled and some parent requires a gradient.
Var make_node(OpKind kind, Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from a scalar loss. Parameter gradients accumulate
/// (call zero_grad between steps); interior gradients are reset first so the
/// same graph can be swept repeatedly.
void backward(const Var& loss);

void zero_grad(std::span<const Var> params);

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace layerens::nn
