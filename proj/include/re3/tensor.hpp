#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "re3/error.hpp"

namespace re3 {

using Shape = std::vector<std::size_t>;
using TokenId = std::int32_t;

namespace detail {
struct Node;
}

// Dense row-major float64 tensor that participates in a reverse-mode
// differentiation graph.
//
// A Tensor is a cheap handle; copies share the underlying node. Tensors
// created by an operation keep their parents alive and record the local
// backward rule. Node ids are handed out in creation order, so sorting by id
// yields a topological order of any graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  explicit operator bool() const noexcept { return defined(); }

  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;  // shape[0] of a 2-D tensor
  std::size_t cols() const;  // shape[1] of a 2-D tensor

  std::span<const double> data() const;
  // Leaf tensors only (parameters and inputs); used by optimizers and
  // initializers.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  std::uint64_t node_id() const;
  const std::string& op() const;
  bool is_leaf() const;

  // Deep copy of values into a fresh leaf.
  Tensor detach_copy(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(const std::string&, Shape, std::vector<double>,
                        std::vector<Tensor>,
                        std::function<void(std::span<const double>,
                                           std::span<Tensor>)>);
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty means "absent"
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string op = "leaf";
  std::vector<Tensor> parents;
  // Receives this node's upstream gradient and the parent handles; adds the
  // local contribution into each parent that requires grad.
  std::function<void(std::span<const double>, std::span<Tensor>)> backward;
};
}  // namespace detail

// Adds `values` into t's gradient, allocating it on first use.
void accumulate_grad(Tensor& t, std::span<const double> values);

// Builds an operation result. When gradient recording is disabled or no parent
// requires grad, the parents are dropped and no backward rule is kept.
Tensor make_op(const std::string& op, Shape shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<void(std::span<const double>, std::span<Tensor>)>
                   backward);

// RAII switch that disables graph recording on the current thread.
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

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// x[m,n] + bias[n] broadcast over rows; the only broadcasting supported.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor gelu(const Tensor& x);
// Row-wise layer normalization over the last dimension with affine gamma/beta.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);
Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l2_norm_sq(const Tensor& x);
// Row softmax. With `causal`, entry (i, j) is masked out when j > i.
Tensor softmax_rows(const Tensor& x, bool causal);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

// Mean over t of -log softmax(logits[t])[targets[t]].
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const TokenId> targets);

// Populates grad on every requires_grad ancestor of `loss`. Leaf gradients
// accumulate across calls; interior gradients are recomputed each call.
void backward(const Tensor& loss);

// Central-difference gradient check of a scalar function at x.
// Returns max_i |g_analytic_i - g_fd_i| / (|g_fd_i| + 1e-8).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double h = 1e-5);

// Same check against a tensor that `loss_fn` already closes over (for example
// a model parameter); the leaf is perturbed in place and restored.
double finite_diff_check_in_place(const std::function<Tensor()>& loss_fn,
                                  Tensor& leaf, double h = 1e-5);

}  // namespace re3
