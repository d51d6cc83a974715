#include "layerens/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace layerens::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax: return "softmax";
    case OpKind::upsample: return "upsample";
    case OpKind::downsample: return "downsample";
    case OpKind::add: return "add";
    case OpKind::concat: return "concat";
    case OpKind::batchnorm: return "batchnorm";
    case OpKind::linear_combination: return "linear_combination";
    case OpKind::multiply: return "multiply";
    case OpKind::sum: return "sum";
    case OpKind::loss: return "loss";
  }
  return "unknown";
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return node;
}

Var make_node(OpKind kind, Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->kind = kind;
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p->requires_grad) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return node;
}

void backward(const Var& loss) {
  if (!loss) throw std::invalid_argument("backward: null loss node");
  if (loss->value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss->value.shape()));
  }
  if (!loss->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->kind != OpKind::leaf) node->zero_grad();
  }
  loss->grad_buffer()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

void zero_grad(std::span<const Var> params) {
  for (const auto& p : params) p->zero_grad();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace layerens::nn
