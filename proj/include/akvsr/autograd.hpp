// akvsr/autograd.hpp
//
// Reverse-mode differentiation over Tensor values. Every op below builds one
// node whose backward rule pushes its output gradient into its parents.
// Nodes are immutable once built; only leaves (parameters, inputs) carry
// values that callers mutate between graph builds.

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "akvsr/tensor.hpp"

namespace akvsr {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  // Adds g into grad, allocating zeros on first use.
  void accumulate(std::span<const double> g);
  Tensor& grad_buffer();
};

// Handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var leaf(Tensor value, bool requires_grad = false);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  // Mutable access is for leaves only: optimizer updates and perturbation.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const { return node_->value.item(); }

  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

// Gradients of one backward pass, keyed by leaf node.
class GradMap {
 public:
  bool contains(const Var& v) const { return grads_.count(v.node()) != 0; }
  const Tensor& at(const Var& v) const;
  std::size_t size() const { return grads_.size(); }
  void insert(const Node* n, Tensor g) { grads_.emplace(n, std::move(g)); }

 private:
  std::unordered_map<const Node*, Tensor> grads_;
};

// Computes d(root)/d(leaf) for every reachable leaf that requires gradients.
// Gradients of all reachable nodes are reset first, so the result does not
// depend on earlier passes over shared leaves.
GradMap backward(const Var& root);

// While alive, ops on this thread build value-only nodes (no parents, no
// backward rule). Used for inference.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---- element-wise -------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var relu(const Var& a);
// x[m x n] + b[n] on every row.
Var add_row(const Var& x, const Var& b);

// ---- reductions ---------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
// Rank 1 -> shape {1}; rank 2 -> one value per row, shape {m}.
Var logsumexp(const Var& x);

// ---- linear algebra -----------------------------------------------------
Var matmul(const Var& a, const Var& b);
// a[m x k] * b[n x k]^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

// ---- row-wise normalizers ------------------------------------------------
// exp(x/scale - max) / sum, per row.
Var softmax_rows(const Var& x, double scale = 1.0);
Var log_softmax_rows(const Var& x);
// Sets entries above the diagonal to -inf (position i sees j <= i).
Var causal_mask(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- indexing -------------------------------------------------------------
// out[i] = flat(x)[index[i]], or `fill` where index[i] < 0.
Var take(const Var& x, std::span<const std::ptrdiff_t> index, double fill = kNegInf);
// out row i = table row idx[i].
Var gather_rows(const Var& table, std::span<const std::size_t> idx);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
// Stacks equal-length rank-1 vars as the rows of a matrix.
Var stack_rows(std::span<const Var> rows);
Var reshape(const Var& x, Shape shape);

// Identity forward, negated backward. Only the gradient-check mutation test
// uses it, to show that a sign error in one rule is caught.
Var flip_gradient(const Var& x);

}  // namespace akvsr
