#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqmesh {

using Shape = std::vector<std::size_t>;

/// Thrown for incompatible shapes, bad axes and similar contract violations.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a forward op produces NaN/Inf, or training diverges.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the gradient tape. Interior nodes carry the closure that
/// pushes their accumulated gradient into their inputs.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad();
};

/// Dense row-major float64 array with reverse-mode autodiff.
///
/// Tensors are cheap handles: copies share the underlying node. Use
/// `clone()` for an independent copy of the values.
class Tensor {
 public:
  Tensor();
  explicit Tensor(NodePtr node);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return n_->shape; }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return n_->value.size(); }

  std::span<const double> data() const { return n_->value; }
  /// Direct write access; only meaningful on leaves (parameters, buffers).
  std::span<double> mutable_data() { return n_->value; }
  double item() const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool on) { n_->requires_grad = on; }
  bool has_grad() const { return !n_->grad.empty(); }
  std::span<const double> grad() const { return n_->grad; }
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  const NodePtr& node() const { return n_; }

 private:
  NodePtr n_;
};

bool grad_enabled();

/// Disables tape recording for its lifetime (evaluation, audits).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Builds the result of an op. `fn` is only retained when some input
/// requires a gradient and recording is enabled. Throws NumericalError if
/// any value is non-finite.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs, std::function<void(Node&)> fn);

/// Replays the tape behind `loss` (a single-element tensor) in reverse
/// topological order, accumulating into every reachable leaf's grad.
void backward(const Tensor& loss);

/// Nodes of the tape behind `root`, inputs before consumers.
std::vector<Node*> topological_order(const Tensor& root);

}  // namespace eqmesh
