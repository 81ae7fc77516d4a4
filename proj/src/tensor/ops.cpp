#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "re3/tensor.hpp"

namespace re3 {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::string dims(const Tensor& t) {
  std::string out = "[";
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i) out += ",";
    out += std::to_string(t.shape()[i]);
  }
  return out + "]";
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeMismatch(std::string(op) + " expects a 2-D tensor, got " + dims(t));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + dims(a) + " vs " + dims(b));
  }
}

// Accumulates into a parent only when it takes part in differentiation.
void push_grad(Tensor& parent, std::span<const double> g) {
  if (parent.requires_grad()) accumulate_grad(parent, g);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeMismatch("matmul inner dimensions: " + dims(a) + " x " + dims(b));
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [m, k, n](std::span<const double> g, std::span<Tensor> p) {
                   ConstMap dc(g.data(), m, n);
                   if (p[0].requires_grad()) {
                     std::vector<double> da(m * k);
                     MutMap(da.data(), m, k).noalias() = dc * ConstMap(p[1].data().data(), k, n).transpose();
                     accumulate_grad(p[0], da);
                   }
                   if (p[1].requires_grad()) {
                     std::vector<double> db(k * n);
                     MutMap(db.data(), k, n).noalias() = ConstMap(p[0].data().data(), m, k).transpose() * dc;
                     accumulate_grad(p[1], db);
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [](std::span<const double> g, std::span<Tensor> p) {
                   push_grad(p[0], g);
                   push_grad(p[1], g);
                 });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_row");
  const auto m = x.rows(), n = x.cols();
  if (bias.size() != n) throw ShapeMismatch("add_row bias " + dims(bias) + " for " + dims(x));
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return make_op("add_row", x.shape(), std::move(out), {x, bias},
                 [m, n](std::span<const double> g, std::span<Tensor> p) {
                   push_grad(p[0], g);
                   if (p[1].requires_grad()) {
                     std::vector<double> db(n, 0.0);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
                     accumulate_grad(p[1], db);
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op("mul", a.shape(), std::move(out), {a, b},
                 [](std::span<const double> g, std::span<Tensor> p) {
                   for (int side = 0; side < 2; ++side) {
                     if (!p[side].requires_grad()) continue;
                     const auto other = p[1 - side].data();
                     std::vector<double> d(g.size());
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * other[i];
                     accumulate_grad(p[side], d);
                   }
                 });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_op("scale", x.shape(), std::move(out), {x},
                 [factor](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(g.begin(), g.end());
                   for (auto& v : d) v *= factor;
                   push_grad(p[0], d);
                 });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * kInvSqrt2));
  }
  return make_op("gelu", x.shape(), std::move(out), {x},
                 [](std::span<const double> g, std::span<Tensor> p) {
                   const auto in = p[0].data();
                   std::vector<double> d(g.size());
                   for (std::size_t i = 0; i < d.size(); ++i) {
                     const double cdf = 0.5 * (1.0 + std::erf(in[i] * kInvSqrt2));
                     const double pdf = kInvSqrt2Pi * std::exp(-0.5 * in[i] * in[i]);
                     d[i] = g[i] * (cdf + in[i] * pdf);
                   }
                   push_grad(p[0], d);
                 });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank2(x, "layernorm");
  if (!(eps > 0.0)) throw ShapeMismatch("layernorm eps must be positive");
  const auto m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) {
    throw ShapeMismatch("layernorm affine " + dims(gamma) + "/" + dims(beta) + " for " + dims(x));
  }
  std::vector<double> xhat(m * n), inv_std(m), out(m * n);
  const auto in = x.data(), ga = gamma.data(), be = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * ga[j] + be[j];
    }
  }
  return make_op(
      "layernorm", x.shape(), std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          std::span<const double> g, std::span<Tensor> p) {
        const auto ga = p[1].data();
        if (p[0].requires_grad()) {
          std::vector<double> dx(m * n);
          for (std::size_t i = 0; i < m; ++i) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dy = g[i * n + j] * ga[j];
              sum_dy += dy;
              sum_dy_xhat += dy * xhat[i * n + j];
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const double dy = g[i * n + j] * ga[j];
              dx[i * n + j] = inv_std[i] * (dy - inv_n * sum_dy - xhat[i * n + j] * inv_n * sum_dy_xhat);
            }
          }
          accumulate_grad(p[0], dx);
        }
        if (p[1].requires_grad() || p[2].requires_grad()) {
          std::vector<double> dg(n, 0.0), db(n, 0.0);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              dg[j] += g[i * n + j] * xhat[i * n + j];
              db[j] += g[i * n + j];
            }
          }
          push_grad(p[1], dg);
          push_grad(p[2], db);
        }
      });
}

Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding_lookup");
  if (ids.empty()) throw EmptySequence("embedding_lookup with no ids");
  const auto vocab = table.rows(), d = table.cols();
  std::vector<TokenId> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw TokenOutOfRange("id " + std::to_string(rows[i]) + " outside [0," + std::to_string(vocab) + ")");
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const auto count = rows.size();
  return make_op("embedding_lookup", {count, d}, std::move(out), {table},
                 [rows = std::move(rows), vocab, d](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> dt(vocab * d, 0.0);
                   for (std::size_t i = 0; i < rows.size(); ++i)
                     for (std::size_t j = 0; j < d; ++j) dt[rows[i] * d + j] += g[i * d + j];
                   push_grad(p[0], dt);
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  if (n != x.size()) throw ShapeMismatch("reshape " + dims(x) + " to incompatible shape");
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op("reshape", std::move(shape), std::move(out), {x},
                 [](std::span<const double> g, std::span<Tensor> p) { push_grad(p[0], g); });
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(x.data().data(), m, n).transpose();
  return make_op("transpose", {n, m}, std::move(out), {x},
                 [m, n](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(m * n);
                   MutMap(d.data(), m, n) = ConstMap(g.data(), n, m).transpose();
                   push_grad(p[0], d);
                 });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op("sum", {1}, {total}, {x},
                 [](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(p[0].size(), g[0]);
                   push_grad(p[0], d);
                 });
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.size());
  return make_op("mean", {1}, {total / n}, {x},
                 [n](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(p[0].size(), g[0] / n);
                   push_grad(p[0], d);
                 });
}

Tensor l2_norm_sq(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v * v;
  return make_op("l2_norm_sq", {1}, {total}, {x},
                 [](std::span<const double> g, std::span<Tensor> p) {
                   const auto in = p[0].data();
                   std::vector<double> d(in.size());
                   for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * in[i] * g[0];
                   push_grad(p[0], d);
                 });
}

Tensor softmax_rows(const Tensor& x, bool causal) {
  require_rank2(x, "softmax_rows");
  const auto m = x.rows(), n = x.cols();
  if (causal && n < m) throw ShapeMismatch("causal softmax needs cols >= rows, got " + dims(x));
  std::vector<double> out(m * n, 0.0);
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? i + 1 : n;
    const double* row = in.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[i * n + j] /= z;
  }
  auto saved = out;
  return make_op("softmax_rows", x.shape(), std::move(out), {x},
                 [m, n, y = std::move(saved)](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(m * n);
                   for (std::size_t i = 0; i < m; ++i) {
                     double dot = 0.0;
                     for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                     for (std::size_t j = 0; j < n; ++j) d[i * n + j] = y[i * n + j] * (g[i * n + j] - dot);
                   }
                   push_grad(p[0], d);
                 });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_rows");
  const auto m = x.rows(), n = x.cols();
  if (count == 0 || start + count > m) throw ShapeMismatch("slice_rows out of range for " + dims(x));
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(start * n),
                          x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * n));
  return make_op("slice_rows", {count, n}, std::move(out), {x},
                 [m, n, start](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(m * n, 0.0);
                   std::copy(g.begin(), g.end(), d.begin() + static_cast<std::ptrdiff_t>(start * n));
                   push_grad(p[0], d);
                 });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_cols");
  const auto m = x.rows(), n = x.cols();
  if (count == 0 || start + count > n) throw ShapeMismatch("slice_cols out of range for " + dims(x));
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.data()[i * n + start + j];
  return make_op("slice_cols", {m, count}, std::move(out), {x},
                 [m, n, start, count](std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(m * n, 0.0);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < count; ++j) d[i * n + start + j] = g[i * count + j];
                   push_grad(p[0], d);
                 });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const auto n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const auto& t : parts) {
    require_rank2(t, "concat_rows");
    if (t.cols() != n) throw ShapeMismatch("concat_rows width " + dims(t) + " vs " + std::to_string(n));
    offsets.push_back(m);
    m += t.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
  return make_op("concat_rows", {m, n}, std::move(out), {parts.begin(), parts.end()},
                 [n, offsets = std::move(offsets)](std::span<const double> g, std::span<Tensor> p) {
                   for (std::size_t k = 0; k < p.size(); ++k) {
                     if (!p[k].requires_grad()) continue;
                     const auto begin = g.begin() + static_cast<std::ptrdiff_t>(offsets[k] * n);
                     accumulate_grad(p[k], std::span<const double>(&*begin, p[k].size()));
                   }
                 });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const auto m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& t : parts) {
    require_rank2(t, "concat_cols");
    if (t.rows() != m) throw ShapeMismatch("concat_cols height " + dims(t) + " vs " + std::to_string(m));
    offsets.push_back(n);
    widths.push_back(t.cols());
    n += t.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * n + offsets[k]));
  }
  return make_op("concat_cols", {m, n}, std::move(out), {parts.begin(), parts.end()},
                 [m, n, offsets = std::move(offsets), widths = std::move(widths)](
                     std::span<const double> g, std::span<Tensor> p) {
                   for (std::size_t k = 0; k < p.size(); ++k) {
                     if (!p[k].requires_grad()) continue;
                     std::vector<double> d(m * widths[k]);
                     for (std::size_t i = 0; i < m; ++i)
                       std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(i * n + offsets[k]), widths[k],
                                   d.begin() + static_cast<std::ptrdiff_t>(i * widths[k]));
                     accumulate_grad(p[k], d);
                   }
                 });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets) {
  require_rank2(logits, "softmax_cross_entropy");
  if (targets.empty()) throw EmptySequence("cross-entropy over an empty target sequence");
  const auto t_len = logits.rows(), vocab = logits.cols();
  if (targets.size() != t_len) {
    throw ShapeMismatch("cross-entropy: " + std::to_string(targets.size()) + " targets for " + dims(logits));
  }
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  for (auto id : tgt) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw TokenOutOfRange("target id " + std::to_string(id) + " outside [0," + std::to_string(vocab) + ")");
    }
  }
  const auto in = logits.data();
  std::vector<double> probs(t_len * vocab);
  double total = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = in.data() + t * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(row[v] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[tgt[t]];
    for (std::size_t v = 0; v < vocab; ++v) probs[t * vocab + v] = std::exp(row[v] - log_z);
  }
  const double inv_t = 1.0 / static_cast<double>(t_len);
  return make_op("softmax_cross_entropy", {1}, {total * inv_t}, {logits},
                 [vocab, inv_t, tgt = std::move(tgt), probs = std::move(probs)](
                     std::span<const double> g, std::span<Tensor> p) {
                   std::vector<double> d(probs.size());
                   const double s = g[0] * inv_t;
                   for (std::size_t i = 0; i < d.size(); ++i) d[i] = s * probs[i];
                   for (std::size_t t = 0; t < tgt.size(); ++t) d[t * vocab + tgt[t]] -= s;
                   push_grad(p[0], d);
                 });
}

}  // namespace re3
