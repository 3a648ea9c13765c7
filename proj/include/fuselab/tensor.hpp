#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fuselab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct Node;
using BackwardRule = std::function<void(Node&)>;

/// Storage and autodiff bookkeeping behind a Tensor handle.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardRule backward_rule;
  const char* op = "leaf";

  /// Returns the gradient buffer, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

/// Dense row-major array of doubles with an optional gradient.
///
/// Tensors are handles: copies share storage. Operations that consume a
/// tensor requiring grad record themselves so that backward() can replay the
/// chain rule in reverse topological order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  /// Builds the output of an operation. Throws NonFiniteError if any value is
  /// NaN/Inf. The backward rule is only recorded when some input requires grad
  /// and grad mode is enabled.
  static Tensor from_op(const char* op, Shape shape, std::vector<double> data,
                        const std::vector<Tensor>& inputs, BackwardRule rule);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Deep copy without graph history.
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Operations recorded from a root tensor, topologically ordered (inputs
/// before consumers). Each node appears exactly once.
class Graph {
 public:
  static Graph trace(const Tensor& root);
  const std::vector<Node*>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<Node*> order_;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
/// every tensor that requires grad, including intermediates.
void backward(const Graph& graph, const Tensor& loss);
void backward(const Tensor& loss);

bool grad_enabled();

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

}  // namespace fuselab
