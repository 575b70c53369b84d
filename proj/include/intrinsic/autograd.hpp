#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "intrinsic/tensor.hpp"

namespace intrinsic::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the dynamically recorded computation graph. Leaves that
/// require gradients are parameters; interior nodes carry a backward closure
/// that reads `grad` and accumulates into the parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  /// Accumulate `g` into `grad`, allocating zeros on first touch.
  void accumulate(const Tensor& g);
  double* grad_buffer();
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor(); }

  const Shape& shape() const { return node_->value.shape(); }
  double item() const { return node_->value.item(); }
  bool defined() const { return static_cast<bool>(node_); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Create the output node of an op. The backward closure is only kept when
/// grad mode is on and at least one parent requires gradients.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node that requires them.
void backward(const Var& root);

}  // namespace intrinsic::ag
