#include <cmath>
#include <random>

#include "doctest.h"
#include "re3/tensor.hpp"
#include "test_util.hpp"

using namespace re3;
using re3::testing::random_ids;
using re3::testing::random_tensor;

namespace {

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      out[i * n + j] = s;
    }
  return out;
}

double lse_oracle(const Tensor& logits, const std::vector<TokenId>& targets) {
  double total = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    double mx = logits.at(t, 0);
    for (std::size_t v = 1; v < logits.cols(); ++v) mx = std::max(mx, logits.at(t, v));
    double z = 0.0;
    for (std::size_t v = 0; v < logits.cols(); ++v) z += std::exp(logits.at(t, v) - mx);
    total += mx + std::log(z) - logits.at(t, static_cast<std::size_t>(targets[t]));
  }
  return total / static_cast<double>(logits.rows());
}

Tensor identity(std::size_t n) {
  auto t = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0;
  return t;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity, annihilator and triple-loop oracle") {
  std::mt19937_64 rng(11);
  auto x = random_tensor({3, 4}, rng);
  auto y = matmul(identity(3), x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);

  auto z = matmul(Tensor::zeros({2, 3}), x);
  CHECK(z.shape() == Shape{2, 4});
  for (double v : z.data()) CHECK(v == 0.0);

  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
    auto c = matmul(a, b);
    auto expected = naive_matmul(a, b);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(c.data()[i] - expected[i]) < 1e-12);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeMismatch);
}

TEST_CASE("matmul is associative within 1e-9 on 4x4 chains") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_tensor({4, 4}, rng), b = random_tensor({4, 4}, rng), c = random_tensor({4, 4}, rng);
    auto left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < 16; ++i) {
      const double denom = std::max(1.0, std::abs(left.data()[i]));
      CHECK(std::abs(left.data()[i] - right.data()[i]) / denom < 1e-9);
    }
  }
}

TEST_CASE("softmax cross-entropy values") {
  auto uniform = Tensor::zeros({4, 16});
  std::vector<TokenId> targets{0, 5, 9, 15};
  CHECK(softmax_cross_entropy(uniform, targets).item() == doctest::Approx(std::log(16.0)).epsilon(1e-14));

  auto peaked = Tensor::zeros({4, 16});
  for (std::size_t t = 0; t < 4; ++t) peaked.mutable_data()[t * 16 + static_cast<std::size_t>(targets[t])] = 1e4;
  CHECK(softmax_cross_entropy(peaked, targets).item() < 1e-6);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto logits = random_tensor({3, 8}, rng, 2.0);
    auto ids = random_ids(3, 8, rng);
    CHECK(std::abs(softmax_cross_entropy(logits, ids).item() - lse_oracle(logits, ids)) < 1e-10);
  }

  std::vector<TokenId> bad{0, 16, 1, 2};
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, bad), TokenOutOfRange);
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, std::span<const TokenId>{}), EmptySequence);
}

TEST_CASE("elementwise family spot values") {
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  auto constant = Tensor::full({1, 6}, 3.5);
  auto ln = layernorm(constant, Tensor::full({6}, 1.0), Tensor::zeros({6}));
  for (double v : ln.data()) CHECK(v == 0.0);
  CHECK(l2_norm_sq(Tensor::from_data({2}, {3.0, 4.0})).item() == 25.0);
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeMismatch);
  CHECK_THROWS_AS(add_row(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeMismatch);
}

TEST_CASE("backward analytic cases") {
  auto x = Tensor::from_data({5}, {1, 2, 3, 4, 5}, true);
  backward(sum(x));
  REQUIRE(x.has_grad());
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = Tensor::from_data({2}, {1.0, 2.0}, true);
  backward(l2_norm_sq(y));
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);

  CHECK_THROWS_AS(backward(add(x, x)), NonScalarLoss);
}

TEST_CASE("gradients accumulate across backward calls until zero_grad") {
  auto x = Tensor::from_data({3}, {1, -2, 0.5}, true);
  auto loss = l2_norm_sq(scale(x, 3.0));
  backward(loss);
  std::vector<double> first(x.grad().begin(), x.grad().end());
  backward(loss);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * first[i]);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("graph without requires_grad leaves grads absent") {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  auto loss = mean(gelu(matmul(a, b)));
  backward(loss);
  CHECK_FALSE(a.has_grad());
  CHECK_FALSE(b.has_grad());
  CHECK(loss.is_leaf());
}

TEST_CASE("operations record parents and creation order") {
  auto a = Tensor::from_data({1, 2}, {1, 2}, true);
  auto b = scale(a, 2.0);
  auto c = sum(b);
  CHECK(b.op() == "scale");
  CHECK(b.node()->parents.size() == 1);
  CHECK(c.node_id() > b.node_id());
  CHECK(b.node_id() > a.node_id());
}

TEST_CASE("no-grad guard suppresses recording") {
  auto a = Tensor::from_data({2}, {1, 2}, true);
  Tensor b;
  {
    NoGradGuard guard;
    b = scale(a, 2.0);
  }
  CHECK_FALSE(b.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("composed MLP gradients match finite differences") {
  std::mt19937_64 rng(21);
  auto x = random_tensor({4, 5}, rng);
  auto w1 = random_tensor({5, 6}, rng, 0.5, true), b1 = random_tensor({6}, rng, 0.1, true);
  auto w2 = random_tensor({6, 3}, rng, 0.5, true);
  std::vector<TokenId> targets{0, 2, 1, 2};
  auto loss_fn = [&] {
    return softmax_cross_entropy(matmul(gelu(add_row(matmul(x, w1), b1)), w2), targets);
  };
  for (Tensor* p : {&w1, &b1, &w2}) CHECK(finite_diff_check_in_place(loss_fn, *p) < 1e-4);
}

TEST_CASE("finite_diff_check controls") {
  std::mt19937_64 rng(8);
  auto x = random_tensor({6}, rng);
  CHECK(finite_diff_check([](const Tensor& t) { return l2_norm_sq(t); }, x) < 1e-8);

  auto broken = [](const Tensor& t) {
    auto doubled = make_op("broken_square", t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                           {t}, [](std::span<const double> g, std::span<Tensor> p) {
                             std::vector<double> d(g.begin(), g.end());
                             for (auto& v : d) v *= 3.0;
                             if (p[0].requires_grad()) accumulate_grad(p[0], d);
                           });
    return sum(doubled);
  };
  CHECK(finite_diff_check(broken, x) > 1e-1);
}

TEST_CASE("every registered op passes finite differences on random inputs") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 5}, rng);
    auto same = random_tensor({3, 4}, rng);
    auto bias = random_tensor({4}, rng);
    auto square = random_tensor({4, 4}, rng);
    auto weights = random_tensor({3, 4}, rng);  // fixed projection to a scalar
    auto readout = [&](const Tensor& t) {
      if (t.shape() == weights.shape()) return sum(mul(t, weights));
      return sum(mul(t, t));
    };
    const double tol = 1e-4;
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(matmul(t, b)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(matmul(a, t)); }, b) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(add(t, same)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(mul(t, same)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(add_row(a, t)); }, bias) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(scale(t, -1.7)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(gelu(t)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(layernorm(t, bias, bias)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(layernorm(a, t, bias)); }, bias) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(layernorm(a, bias, t)); }, bias) < tol);
    std::vector<TokenId> ids{1, 3, 1};
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(embedding_lookup(t, ids)); },
                            random_tensor({5, 4}, rng)) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(reshape(t, {4, 3})); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(transpose(t)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return mean(mul(t, same)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return l2_norm_sq(t); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(softmax_rows(t, false)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(softmax_rows(t, true)); }, square) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(slice_rows(t, 1, 2)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return readout(slice_cols(t, 1, 2)); }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) {
            std::vector<Tensor> parts{t, same};
            return readout(concat_rows(parts));
          }, a) < tol);
    CHECK(finite_diff_check([&](const Tensor& t) {
            std::vector<Tensor> parts{same, t};
            return readout(concat_cols(parts));
          }, a) < tol);
    auto ids5 = random_ids(3, 5, rng);
    CHECK(finite_diff_check([&](const Tensor& t) { return softmax_cross_entropy(t, ids5); },
                            random_tensor({3, 5}, rng, 2.0)) < tol);
  }
}

TEST_CASE("outputs are bitwise deterministic") {
  std::mt19937_64 rng(99);
  auto a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
  auto g = random_tensor({7}, rng), be = random_tensor({7}, rng);
  for (int rep = 0; rep < 2; ++rep) {
    auto m1 = matmul(a, b), m2 = matmul(a, b);
    CHECK(std::equal(m1.data().begin(), m1.data().end(), m2.data().begin()));
    auto s1 = softmax_rows(a, false), s2 = softmax_rows(a, false);
    CHECK(std::equal(s1.data().begin(), s1.data().end(), s2.data().begin()));
    auto l1 = layernorm(a, g, be), l2 = layernorm(a, g, be);
    CHECK(std::equal(l1.data().begin(), l1.data().end(), l2.data().begin()));
  }
}

}  // TEST_SUITE
