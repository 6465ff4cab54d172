#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dor/tensor.hpp"

// Reverse-mode differentiation over dense double tensors. Every op
// builds a node holding its forward value and a closure that pushes the node's
// gradient to its parents. Calling backward() on a scalar walks the graph in
// reverse topological order.
namespace dor::nn {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const std::string& detail);
};

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

}  // namespace detail

class Var {
 public:
  Var() = default;

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  // Gradient accumulated by backward(); zeros if nothing reached this node.
  const Tensor& grad() const;

  // In-place access for optimizers and finite-difference probes.
  Tensor& mutable_value() { return node_->value; }
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  // Seeds d(this)/d(this) = 1; requires a single-element value.
  void backward();
  // Seeds with an explicit upstream gradient of matching shape.
  void backward(const Tensor& seed);

  double item() const { return node_->value.item(); }

 private:
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Var make_node(const char*, Tensor, std::vector<Var>, std::function<void(detail::Node&)>);
  friend Var parameter(Tensor);
  friend Var constant(Tensor);
  std::shared_ptr<detail::Node> node_;
};

// Leaf that receives gradients.
Var parameter(Tensor value);
// Leaf that never receives gradients.
Var constant(Tensor value);

// Builds a result node. The finite check runs on every op output.
Var make_node(const char* op, Tensor value, std::vector<Var> parents,
              std::function<void(detail::Node&)> backward);

// While alive, ops record no parents or closures on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise with numpy-style right-aligned broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

// [m,k] x [k,n].
Var matmul(const Var& a, const Var& b);

// x: [N,H,W,Cin], w: [KH,KW,Cin,Cout], b: [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t pad);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var log(const Var& x);
// Softmax over the last axis.
Var softmax(const Var& x);
// (x - mean) / sqrt(var + eps) over the last axis, biased variance.
Var layer_norm(const Var& x, double eps = 1e-5);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& axes);
Var broadcast_to(const Var& x, const Shape& shape);
// Drops the last axis, keeping entry `index` of it.
Var select_last(const Var& x, std::size_t index);
// Concatenates along the last axis; leading dims must agree.
Var concat_last(const std::vector<Var>& parts);

// Reductions drop the listed axes. An empty list reduces everything to a scalar.
Var reduce_sum(const Var& x, std::vector<std::size_t> axes = {});
Var reduce_mean(const Var& x, std::vector<std::size_t> axes = {});

// -sum(g log p + (1-g) log(1-p)) with p clamped to [eps, 1-eps]. Scalar.
Var binary_cross_entropy_sum(const Var& pred, const Tensor& target, double eps);
// sum of smooth-L1(d): 0.5 d^2/beta if |d| < beta else |d| - 0.5 beta. Scalar.
Var smooth_l1_sum(const Var& diff, double beta);

}  // namespace dor::nn
