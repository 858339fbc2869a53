#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace reenact {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Thread-local switch: when off, ops do not record the tape.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

template <class Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated on first use, same length as value
  bool requires_grad = false;

  // Tape edges; cleared by backward() so activations can be reclaimed.
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  std::vector<Real>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor with optional reverse-mode gradient tracking.
/// Copies are shallow (shared storage); use clone() for a deep copy.
template <class Real>
class Tensor {
 public:
  using Node = detail::TensorNode<Real>;

  Tensor() : node_(std::make_shared<Node>()) {}

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    validate_shape(shape);
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<std::size_t>(numel(node_->shape)), Real(0));
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, Real v, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    for (auto& x : t.node_->value) x = v;
    return t;
  }

  static Tensor from_vector(Shape shape, std::vector<Real> data,
                            bool requires_grad = false) {
    validate_shape(shape);
    if (static_cast<std::int64_t>(data.size()) != numel(shape))
      throw std::invalid_argument("Tensor: data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(Real v, bool requires_grad = false) {
    return from_vector({1}, {v}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(node_->value.size());
  }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t dim(int i) const { return node_->shape.at(i); }

  Real* data() { return node_->value.data(); }
  const Real* data() const { return node_->value.data(); }
  std::vector<Real>& values() { return node_->value; }
  const std::vector<Real>& values() const { return node_->value; }

  Real operator[](std::int64_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  /// Gradient storage, allocated as zeros on first access.
  std::vector<Real>& grad() { return node_->ensure_grad(); }
  const Real* grad_data() const { return node_->grad.data(); }
  bool has_grad() const { return !node_->grad.empty(); }

  void zero_grad() {
    auto& g = node_->ensure_grad();
    std::fill(g.begin(), g.end(), Real(0));
  }

  Real item() const {
    if (size() != 1)
      throw std::invalid_argument("Tensor::item: tensor is not scalar, shape " +
                                  shape_str(node_->shape));
    return node_->value[0];
  }

  /// Deep copy of values; gradient state and tape edges are not copied.
  Tensor clone() const {
    Tensor t;
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  /// Leaf copy of the values, cut off from this tensor's tape.
  Tensor detach(bool requires_grad = false) const {
    Tensor t = clone();
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool all_finite() const {
    for (Real v : node_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  static void validate_shape(const Shape& shape) {
    for (auto d : shape)
      if (d <= 0)
        throw std::invalid_argument("Tensor: non-positive extent in shape " +
                                    shape_str(shape));
  }

  std::shared_ptr<Node> node_;
};

namespace detail {

/// Builds an op output: allocates the value buffer and, when grad mode is on
/// and any input needs gradients, wires the tape edge.
template <class Real, class Backprop>
Tensor<Real> make_op(Shape shape, std::vector<Tensor<Real>> inputs,
                     Backprop&& backprop) {
  Tensor<Real> out(std::move(shape));
  bool needs = false;
  if (grad_mode()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    out.set_requires_grad(true);
    auto& node = *out.node();
    node.parents.reserve(inputs.size());
    for (auto& t : inputs) node.parents.push_back(t.node());
    node.backprop = std::forward<Backprop>(backprop);
  }
  return out;
}

}  // namespace detail

/// Propagates whatever gradient is already stored at `root` down its tape
/// (for driving disjoint subgraphs whose output gradients were computed
/// elsewhere). Visited tape edges are released.
template <class Real>
void backward_from(const Tensor<Real>& root) {
  using Node = detail::TensorNode<Real>;

  // Iterative DFS postorder over the tape; reverse postorder processes every
  // consumer before its producers.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  struct Item {
    std::shared_ptr<Node> node;
    std::size_t next_child;
  };
  std::vector<Item> stack;
  if (root.node()->requires_grad) stack.push_back({root.node(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Item& top = stack.back();
    if (top.next_child < top.node->parents.size()) {
      auto child = top.node->parents[top.next_child++];
      if (child->requires_grad && visited.insert(child.get()).second)
        stack.push_back({std::move(child), 0});
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& node = **it;
    if (node.backprop && !node.grad.empty()) node.backprop(node);
  }
  // Release the tape so intermediate activations can be freed.
  for (auto& node : order) {
    node->parents.clear();
    node->backprop = nullptr;
  }
}

/// Reverse-mode accumulation from a scalar loss. Every reachable tensor with
/// requires_grad receives += dLoss/dTensor; the visited tape edges are then
/// released. Leaf gradients persist until zero_grad().
template <class Real>
void backward(const Tensor<Real>& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  loss.node()->ensure_grad()[0] = Real(1);
  backward_from(loss);
}

}  // namespace reenact
