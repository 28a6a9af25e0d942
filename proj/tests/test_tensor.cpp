// Copyright (c) 2026 The rnalab authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "grad_check.hpp"

using namespace rna;
using rna::testing::check_gradients;
using rna::testing::near_relu_kink;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape,
                     bool requires_grad, double lo = -2.0, double hi = 2.0) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and known products") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto col = Tensor::from({2, 1}, {5, 7});
  auto out = matmul(eye, col);
  CHECK(out.values() == std::vector<double>{5, 7});

  auto a = Tensor::from({1, 2}, {1, 2});
  auto b = Tensor::from({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
  auto b = Tensor::from({2, 2}, std::vector<double>(4, 1.0));
  try {
    matmul(a, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidArgument);
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient equals frozen oracle value") {
  // d sum(a.b) / da at a=[[1,2]], b=[[3],[4]]  ->  [[3,4]]
  auto a = Tensor::from({1, 2}, {1, 2}, true);
  auto b = Tensor::from({2, 1}, {3, 4});
  std::vector<Tensor> leaves{a};
  auto build = [&] { return sum(matmul(a, b)); };
  auto report = check_gradients(build, leaves);
  CHECK(report.max_err < 1e-5);
  REQUIRE(a.grad() != nullptr);
  CHECK((*a.grad())[0] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK((*a.grad())[1] == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("relu forward rules") {
  auto x = Tensor::from({3}, {-1, 0, 2});
  CHECK(relu(x).values() == std::vector<double>{0, 0, 2});
  auto neg = Tensor::from({4}, {-5, -0.25, -1e9, -1e-9});
  for (double v : relu(neg).values()) CHECK(v == 0.0);
}

TEST_CASE("relu gradient away from kink") {
  auto x = Tensor::from({2}, {3, -3}, true);
  std::vector<Tensor> leaves{x};
  auto build = [&] { return sum(relu(x)); };
  auto report = check_gradients(build, leaves);
  CHECK(report.max_err < 1e-5);
  CHECK((*x.grad())[0] == 1.0);
  CHECK((*x.grad())[1] == 0.0);
}

TEST_CASE("relu subgradient at zero is zero") {
  auto x = Tensor::from({1}, {0.0}, true);
  backward(sum(relu(x)));
  CHECK((*x.grad())[0] == 0.0);
}

TEST_CASE("row_l2_norm values") {
  auto x = Tensor::from({2, 2}, {3, 4, 0, 0});
  auto n = row_l2_norm(x);
  CHECK(n.values()[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(n.values()[1] == 0.0);
}

TEST_CASE("row_l2_norm gradient matches oracle and frozen value") {
  auto x = Tensor::from({1, 2}, {3, 4}, true);
  std::vector<Tensor> leaves{x};
  auto build = [&] { return sum(row_l2_norm(x)); };
  auto report = check_gradients(build, leaves);
  CHECK(report.max_err < 1e-5);
  CHECK((*x.grad())[0] == doctest::Approx(0.6).epsilon(1e-9));
  CHECK((*x.grad())[1] == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("row_l2_norm zero row has zero gradient") {
  auto x = Tensor::from({1, 3}, {0, 0, 0}, true);
  backward(sum(row_l2_norm(x)));
  for (double g : *x.grad()) CHECK(g == 0.0);
}

TEST_CASE("row_l2_norm absolute homogeneity") {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    auto x = random_tensor(rng, {4, 6}, false);
    const double c = rng.uniform(-3.0, 3.0);
    auto scaled = row_l2_norm(scalar_multiply(x, c));
    auto base = row_l2_norm(x);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(scaled.values()[i] ==
            doctest::Approx(std::abs(c) * base.values()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mean values and errors") {
  CHECK(mean(Tensor::from({2}, {5, 0})).item() == doctest::Approx(2.5));
  CHECK(mean(Tensor::from({1}, {7})).item() == doctest::Approx(7.0));
  CHECK_THROWS_AS(mean(Tensor::from({0}, {})), Error);
}

TEST_CASE("mean gradient distributes 1/n") {
  auto x = Tensor::from({4}, {1, 2, 3, 4}, true);
  backward(mean(x));
  for (double g : *x.grad()) CHECK(g == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy oracle values") {
  auto logits = Tensor::from({1, 2}, {0, 0});
  CHECK(softmax_cross_entropy(logits, {0}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));

  auto big = Tensor::from({1, 2}, {1000, 0});
  const double loss = softmax_cross_entropy(big, {0}).item();
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy shift invariance") {
  Rng rng(11);
  auto logits = random_tensor(rng, {5, 4}, false);
  std::vector<int> labels{0, 3, 1, 2, 2};
  const double base = softmax_cross_entropy(logits, labels).item();
  auto shifted_vals = logits.values();
  for (auto& v : shifted_vals) v += 123.456;
  auto shifted = Tensor::from({5, 4}, shifted_vals);
  CHECK(std::abs(softmax_cross_entropy(shifted, labels).item() - base) < 1e-9);
}

TEST_CASE("softmax cross entropy label range error") {
  auto logits = Tensor::from({1, 3}, {0, 0, 0});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), Error);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), Error);
}

TEST_CASE("backward basics") {
  auto leaf = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(leaf));
  for (double g : *leaf.grad()) CHECK(g == 1.0);

  leaf.zero_grad();
  backward(scalar_multiply(sum(leaf), 3.0));
  for (double g : *leaf.grad()) CHECK(g == 3.0);
}

TEST_CASE("backward rejects non-scalar roots") {
  auto leaf = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(relu(leaf)), Error);
}

TEST_CASE("backward accumulates across calls") {
  auto leaf = Tensor::from({2}, {1, 2}, true);
  auto root = sum(leaf);
  backward(root);
  backward(root);
  for (double g : *leaf.grad()) CHECK(g == 2.0);
}

TEST_CASE("divide_scalars guards the denominator") {
  auto a = Tensor::scalar(1.0);
  auto b = Tensor::scalar(0.0);
  const double q = divide_scalars(a, b).item();
  CHECK(std::isfinite(q));
  auto c = Tensor::scalar(4.0);
  auto d = Tensor::scalar(2.0);
  CHECK(divide_scalars(c, d).item() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("concat_rows stacks and splits gradients") {
  auto a = Tensor::from({1, 2}, {1, 2}, true);
  auto b = Tensor::from({2, 2}, {3, 4, 5, 6}, true);
  auto c = concat_rows(a, b);
  CHECK(c.shape() == std::vector<std::int64_t>{3, 2});
  CHECK(c.values() == std::vector<double>{1, 2, 3, 4, 5, 6});
  backward(sum(square(c)));
  CHECK((*a.grad())[0] == doctest::Approx(2.0));
  CHECK((*b.grad())[3] == doctest::Approx(12.0));
}

TEST_CASE("per-op gradient sweep over random instances") {
  Rng rng(2024);
  struct Case {
    const char* name;
    std::function<double()> run;  // returns max err over one instance
  };

  auto run_simple = [&](auto make_root, std::vector<std::int64_t> shape,
                        bool avoid_kink = false) {
    Tensor x;
    do {
      x = random_tensor(rng, shape, true);
    } while (avoid_kink && near_relu_kink(x));
    std::vector<Tensor> leaves{x};
    auto build = [&] { return make_root(x); };
    return check_gradients(build, leaves).max_err;
  };

  for (int t = 0; t < 20; ++t) {
    CAPTURE(t);
    CHECK(run_simple([](Tensor& x) { return sum(relu(x)); }, {3, 4}, true) < 1e-5);
    CHECK(run_simple([](Tensor& x) { return sum(square(x)); }, {2, 5}) < 1e-5);
    CHECK(run_simple([](Tensor& x) { return mean(row_l2_norm(x)); }, {4, 3}) < 1e-5);
    CHECK(run_simple([](Tensor& x) { return sum(row_sum(x)); }, {3, 3}) < 1e-5);

    {
      auto a = random_tensor(rng, {3, 4}, true);
      auto b = random_tensor(rng, {4, 2}, true);
      std::vector<Tensor> leaves{a, b};
      auto build = [&] { return sum(square(matmul(a, b))); };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
    {
      auto a = random_tensor(rng, {2, 3}, true);
      auto b = random_tensor(rng, {2, 3}, true);
      std::vector<Tensor> leaves{a, b};
      auto build = [&] { return mean(cosine_rows(a, b)); };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
    {
      auto a = random_tensor(rng, {5}, true);
      auto b = random_tensor(rng, {5}, true);
      std::vector<Tensor> leaves{a, b};
      auto build = [&] { return dot(a, b); };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
    {
      auto a = random_tensor(rng, {2, 4}, true);
      auto b = random_tensor(rng, {3, 4}, true);
      std::vector<Tensor> leaves{a, b};
      auto build = [&] { return mean(row_l2_norm(concat_rows(a, b))); };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
    {
      auto x = random_tensor(rng, {3, 4}, true);
      auto b = random_tensor(rng, {4}, true);
      std::vector<Tensor> leaves{x, b};
      auto build = [&] { return sum(square(add_row_vector(x, b))); };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
    {
      auto logits = random_tensor(rng, {4, 3}, true);
      std::vector<int> labels;
      for (int i = 0; i < 4; ++i) labels.push_back(rng.uniform_int(3));
      std::vector<Tensor> leaves{logits};
      auto build = [&] { return softmax_cross_entropy(logits, labels); };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
    {
      auto a = random_tensor(rng, {2, 2}, true);
      auto b = random_tensor(rng, {2, 2}, true);
      std::vector<Tensor> leaves{a, b};
      auto build = [&] {
        return sum(elementwise_multiply(add(a, b), subtract(a, b)));
      };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
    {
      auto a = random_tensor(rng, {1}, true, 0.5, 2.0);
      auto b = random_tensor(rng, {1}, true, 0.5, 2.0);
      std::vector<Tensor> leaves{a, b};
      auto build = [&] { return divide_scalars(sum(a), sum(b)); };
      CHECK(check_gradients(build, leaves).max_err < 1e-5);
    }
  }
}

TEST_CASE("composite random graphs match the oracle") {
  Rng rng(515);
  for (int t = 0; t < 20; ++t) {
    CAPTURE(t);
    Tensor x, w1, b1, w2;
    do {
      x = random_tensor(rng, {4, 3}, true);
      w1 = random_tensor(rng, {3, 5}, true);
      b1 = random_tensor(rng, {5}, true);
      w2 = random_tensor(rng, {5, 2}, true);
    } while (near_relu_kink(add_row_vector(matmul(x, w1), b1)));
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(rng.uniform_int(2));
    std::vector<Tensor> leaves{x, w1, b1, w2};
    auto build = [&] {
      auto h = relu(add_row_vector(matmul(x, w1), b1));
      auto logits = matmul(h, w2);
      auto ce = softmax_cross_entropy(logits, labels);
      auto norms = mean(row_l2_norm(h));
      return add(ce, square(subtract(divide_scalars(norms, Tensor::scalar(2.0)),
                                     Tensor::scalar(1.0))));
    };
    CHECK(check_gradients(build, leaves).max_err < 1e-5);
  }
}

TEST_CASE("determinism: identical seeds give bitwise-identical values and grads") {
  auto run = [] {
    Rng rng(99);
    auto x = random_tensor(rng, {6, 4}, true);
    auto w = random_tensor(rng, {4, 3}, true);
    auto root = mean(row_l2_norm(relu(matmul(x, w))));
    backward(root);
    std::vector<double> out = root.values();
    out.insert(out.end(), x.grad()->begin(), x.grad()->end());
    out.insert(out.end(), w.grad()->begin(), w.grad()->end());
    return out;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("scalar broadcast is the only implicit broadcast") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto s = Tensor::scalar(10.0);
  CHECK(add(a, s).values() == std::vector<double>{11, 12, 13, 14});
  CHECK(subtract(s, a).values() == std::vector<double>{9, 8, 7, 6});
  auto bad = Tensor::from({4}, {1, 2, 3, 4});
  CHECK_THROWS_AS(add(a, bad), Error);
}
