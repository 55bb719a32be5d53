#include "ldct/autodiff.hpp"

#include <unordered_set>

#include "ldct/error.hpp"

namespace ldct::ad {

Array& Node::grad_buffer() {
  if (grad.empty()) grad = Array(value.shape(), 0.0);
  return grad;
}

Var::Var(Array value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  require(node_->value.size() == 1, ErrorKind::kShape,
          "item() on non-scalar of shape " + shape_string(node_->value.shape()));
  return node_->value[0];
}

void Var::backward() const {
  require(node_->value.size() == 1, ErrorKind::kShape, "backward() needs a scalar root");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS restricted to grad-requiring nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->grad = Array();  // interior gradients are transient
  }
}

Var make_op(Array value, const std::vector<Var>& inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

Var detach(const Var& v) { return Var(v.value(), false); }

Var constant(Array value) { return Var(std::move(value), false); }

}  // namespace ldct::ad
