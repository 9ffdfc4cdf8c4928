#include "dgpo/numerics/diff_array.hpp"

#include <sstream>
#include <unordered_set>

namespace dgpo::numerics {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
std::string shape_error_message(const std::string& op, const std::vector<Shape>& shapes) {
  std::ostringstream os;
  os << op << ": incompatible shapes";
  for (const auto& s : shapes) os << ' ' << shape_string(s);
  return os.str();
}
}  // namespace

ShapeError::ShapeError(const std::string& op, const std::vector<Shape>& shapes)
    : std::invalid_argument(shape_error_message(op, shapes)), op_(op) {}

DiffArray DiffArray::constant(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("constant", {shape, Shape{values.size()}});
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return from_node(std::move(node));
}

DiffArray DiffArray::constant(Shape shape, double fill) {
  const auto n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, fill));
}

DiffArray DiffArray::parameter(Shape shape, std::vector<double> values) {
  DiffArray a = constant(std::move(shape), std::move(values));
  a.node_->requires_grad = true;
  return a;
}

std::size_t DiffArray::rows() const {
  if (rank() != 2) throw ShapeError("rows", {shape()});
  return node_->shape[0];
}

std::size_t DiffArray::cols() const {
  if (rank() != 2) throw ShapeError("cols", {shape()});
  return node_->shape[1];
}

double DiffArray::item() const {
  if (size() != 1) throw ShapeError("item", {shape()});
  return node_->value[0];
}

void DiffArray::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

DiffArray DiffArray::clone() const {
  DiffArray a = constant(shape(), node_->value);
  a.node_->requires_grad = node_->requires_grad;
  return a;
}

void backward(const DiffArray& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw GradientError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; order depends only on graph structure.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (detail::Node* node : order) {
    if (node->backward) node->grad.clear();
  }
}

}  // namespace dgpo::numerics
