#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gcagc {

/// Tensor extents, outermost first. An empty shape is a scalar.
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;

namespace detail {

/// One vertex of the recorded computation graph. A node with a backward rule
/// is an operation output; a node without one is a leaf.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
  bool is_leaf() const { return !backward; }
};

/// Wraps freshly computed output data. The graph edge and backward rule are
/// recorded only when at least one parent requires a gradient.
Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& parents,
                   std::function<void(Node&)> backward);

}  // namespace detail

/// Dense row-major array of doubles with optional reverse-mode gradient.
///
/// Tensor is a handle: copies share storage and graph position. Leaves with
/// requires_grad accumulate gradients across backward() calls until
/// zero_grad(); interior nodes are reset on every backward pass.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable storage. Mutating a tensor that is already part of a recorded
  /// graph invalidates that graph's gradients.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  /// Gradient accumulator; empty span when no gradient has been produced.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse pass from this scalar. Throws UsageError for non-scalars.
  void backward() const;

  /// Same data, no history, no gradient requirement. Storage is copied.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const;

  const std::string& op_name() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered operations reachable from a root tensor.
/// Every operation appears after all operations producing its inputs.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  std::vector<std::string> op_names() const;

  /// Seeds d(root)/d(root) = 1 and replays backward rules in reverse order,
  /// visiting each node once.
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> order_;
};

}  // namespace gcagc
