#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ldct/array.hpp"

namespace ldct::ad {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

/// One vertex of the computation graph. Leaves carry no backward function.
struct Node {
  Array value;
  Array grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  /// Zero-initialised gradient buffer shaped like `value`.
  Array& grad_buffer();
  bool wants_grad(std::size_t input) const { return inputs[input]->requires_grad; }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Array value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Array& value() const { return node_->value; }
  Array& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Array& grad() const { return node_->grad; }
  Array& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Array(); }

  /// Reverse sweep from a scalar root; leaf gradients accumulate.
  void backward() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Records an op output. The backward function is dropped when no input
/// requires a gradient, so frozen subgraphs cost nothing to differentiate.
Var make_op(Array value, const std::vector<Var>& inputs, BackwardFn backward);

/// Same value, cut from the graph.
Var detach(const Var& v);

Var constant(Array value);

}  // namespace ldct::ad
