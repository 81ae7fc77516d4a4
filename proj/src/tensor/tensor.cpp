#include "re3/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace re3 {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_recording = true;

#if defined(__GLIBC__)
// Graphs allocate and free many mid-sized buffers per step. Keep them on the
// heap instead of round-tripping through mmap/munmap.
[[maybe_unused]] const bool allocator_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
  return true;
}();
#endif

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data,
                                       bool requires_grad) {
  if (shape.empty()) throw ShapeMismatch("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeMismatch("zero-sized dimension in " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw ShapeMismatch("shape " + shape_string(shape) + " does not match " +
                        std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeMismatch("rows() on rank-" + std::to_string(rank()) + " tensor");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeMismatch("cols() on rank-" + std::to_string(rank()) + " tensor");
  return node_->shape[1];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (size() != 1) throw NonScalarLoss("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }
std::uint64_t Tensor::node_id() const { return node_->id; }
const std::string& Tensor::op() const { return node_->op; }
bool Tensor::is_leaf() const { return !node_->backward; }

Tensor Tensor::detach_copy(bool requires_grad) const {
  return from_data(shape(), node_->data, requires_grad);
}

void accumulate_grad(Tensor& t, std::span<const double> values) {
  auto& g = t.node()->grad;
  if (g.empty()) {
    g.assign(values.begin(), values.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

Tensor make_op(const std::string& op, Shape shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<void(std::span<const double>, std::span<Tensor>)>
                   backward) {
  bool needs_grad = false;
  if (grad_recording) {
    for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(data), needs_grad);
  node->op = op;
  if (needs_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(grad_recording) { grad_recording = false; }
NoGradGuard::~NoGradGuard() { grad_recording = previous_; }
bool grad_enabled() { return grad_recording; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw NonScalarLoss("backward requires a single-element loss tensor");
  }
  if (!loss.requires_grad()) return;

  // Collect every reachable node that requires grad.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    auto* node = stack.back();
    stack.pop_back();
    order.push_back(node);
    for (const auto& p : node->parents) {
      auto* pn = p.node().get();
      if (pn->requires_grad && seen.insert(pn).second) stack.push_back(pn);
    }
  }
  // Creation order is a topological order; walk it backwards.
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  for (auto* node : order) {
    if (node->backward) node->grad.clear();
  }
  Tensor seed = loss;
  const double one = 1.0;
  accumulate_grad(seed, std::span<const double>(&one, 1));

  for (auto* node : order) {
    if (!node->backward || node->grad.empty()) continue;
    node->backward(node->grad, node->parents);
  }
}

double finite_diff_check_in_place(const std::function<Tensor()>& loss_fn,
                                  Tensor& leaf, double h) {
  const bool was_rg = leaf.requires_grad();
  leaf.set_requires_grad(true);
  leaf.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<double> analytic(leaf.size(), 0.0);
  if (leaf.has_grad()) {
    std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
  }
  leaf.zero_grad();
  leaf.set_requires_grad(was_rg);

  double worst = 0.0;
  NoGradGuard no_grad;
  auto values = leaf.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss_fn().item();
    values[i] = saved - h;
    const double down = loss_fn().item();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double h) {
  if (!(h > 0.0)) throw ShapeMismatch("finite difference step must be positive");
  Tensor probe = x.detach_copy(true);
  return finite_diff_check_in_place([&] { return f(probe); }, probe, h);
}

}  // namespace re3
