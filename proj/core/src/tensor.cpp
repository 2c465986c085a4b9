#include "gcagc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "gcagc/error.hpp"

namespace gcagc {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

#ifndef NDEBUG
namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace
#endif

Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& parents,
                   std::function<void(Node&)> backward) {
#ifndef NDEBUG
  if (!all_finite(data)) {
    bool inputs_finite = std::all_of(parents.begin(), parents.end(), [](const Tensor& t) {
      return !t.defined() || all_finite(t.data());
    });
    if (inputs_finite) throw NumericalError(op + ": non-finite output from finite inputs");
  }
#endif
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = std::move(op);
  bool needs = std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
  }
  return Tensor(std::move(node));
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = gcagc::numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  if (gcagc::numel(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " needs " +
                         std::to_string(gcagc::numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool value) {
  if (!node_->is_leaf()) throw UsageError("requires_grad can only be set on leaves");
  node_->requires_grad = value;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }
void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() const {
  Tape tape(*this);
  tape.backward();
}

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(shape(), node_->data, requires_grad);
}

const std::string& Tensor::op_name() const { return node_->op; }

Tape::Tape(const Tensor& root) : root_(root.node()) {
  if (!root_) throw UsageError("backward on undefined tensor");
  // Iterative post-order DFS yields a topological order.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> st;
  st.emplace_back(root_, 0);
  visited.insert(root_.get());
  while (!st.empty()) {
    auto& top = st.back();
    if (top.second < top.first->parents.size()) {
      auto parent = top.first->parents[top.second++];
      if (visited.insert(parent.get()).second) st.emplace_back(std::move(parent), 0);
    } else {
      order_.push_back(std::move(top.first));
      st.pop_back();
    }
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& n : order_) names.push_back(n->op);
  return names;
}

void Tape::backward() {
  if (root_->data.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " + to_string(root_->shape));
  }
  if (!root_->requires_grad) throw UsageError("backward() on a tensor that does not require grad");
  for (auto& n : order_) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  root_->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& n = **it;
    if (!n.is_leaf()) n.backward(n);
  }
}

}  // namespace gcagc
