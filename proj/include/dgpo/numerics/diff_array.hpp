#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgpo::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Raised when an op receives operands of incompatible shape. The message
// names the op and every operand shape.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const std::vector<Shape>& shapes);
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class GradientError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the node first receives gradient
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into the parents' grad buffers.
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major array of 64-bit reals carrying a handle into the dynamic
// tape. Copies share the underlying node; use clone() for a deep copy.
class DiffArray {
 public:
  DiffArray() = default;

  static DiffArray constant(Shape shape, std::vector<double> values);
  static DiffArray constant(Shape shape, double fill = 0.0);
  static DiffArray scalar(double v) { return constant(Shape{}, std::vector<double>{v}); }
  // Leaf that accumulates gradient across backward calls.
  static DiffArray parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  // Allocates the gradient buffer if needed and fills it with zeros.
  void zero_grad();
  // Drops the gradient buffer entirely; has_grad() becomes false.
  void clear_grad() { node_->grad.clear(); }

  // Deep copy of values; the result is a fresh leaf with the same
  // requires_grad flag and no gradient.
  DiffArray clone() const;
  // Same values, cut from the tape.
  DiffArray detach() const { return constant(shape(), node_->value); }

  // Internal: used by ops to build graph nodes.
  static DiffArray from_node(std::shared_ptr<detail::Node> node) {
    DiffArray a;
    a.node_ = std::move(node);
    return a;
  }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Gradients are added to every
// reachable node that requires grad (parameters keep accumulating until
// zeroed). Interior gradient buffers are released afterwards.
void backward(const DiffArray& loss);

}  // namespace dgpo::numerics
