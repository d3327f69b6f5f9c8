#include <doctest.h>

#include <cmath>

#include "vlwb/diff.hpp"
#include "vlwb/rng.hpp"

using namespace vlwb;
using namespace vlwb::diff;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

void expect_gradients_match(const ScalarBuilder& build, const Tensor& input) {
  const auto r = grad_check(build, input);
  CHECK(r.checked > 0);
  CHECK(r.nonfinite.empty());
  CHECK(r.max_relative_error < 1e-6);
}

}  // namespace

TEST_CASE("matmul, add_row and tanh gradients match central differences") {
  Rng rng(1);
  const Tensor w = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
  expect_gradients_match(
      [&](Graph& g, Var x) {
        return sum(diff::tanh(add_row(matmul(x, g.constant(w)), g.constant(b))));
      },
      random_tensor({2, 3}, rng));
}

TEST_CASE("normalization and cosine similarity gradients") {
  Rng rng(2);
  const Tensor bank = random_tensor({5, 4}, rng);
  expect_gradients_match(
      [&](Graph& g, Var x) {
        const Var cos = cosine_similarity(l2_normalize(x), l2_normalize(g.constant(bank)));
        return softmax_cross_entropy(scale(cos, 7.0), 2);
      },
      random_tensor({4}, rng));
}

TEST_CASE("batched cross entropy, max and gather gradients") {
  Rng rng(3);
  const std::vector<std::size_t> labels{0, 2, 1};
  expect_gradients_match(
      [&](Graph&, Var x) {
        const Var ce = softmax_cross_entropy(x, labels);
        const Var mx = sum(max_over_axis(x));
        const Var picked = sum(gather(x, {0, 4, 8}, {3}));
        return add(ce, add(scale(mx, 0.5), scale(picked, -0.25)));
      },
      random_tensor({3, 3}, rng));
}

TEST_CASE("embedding bag mean gradient flows to the table") {
  Rng rng(4);
  const std::vector<std::vector<std::size_t>> bags{{0, 1}, {2}, {1, 2, 3}};
  expect_gradients_match(
      [&](Graph&, Var table) { return squared_l2_norm(embedding_bag_mean(table, bags)); },
      random_tensor({4, 3}, rng));
}

TEST_CASE("scale_by differentiates through the factor") {
  Rng rng(5);
  const Tensor v = random_tensor({4}, rng);
  expect_gradients_match(
      [&](Graph& g, Var f) { return sum(mul(scale_by(g.constant(v), f), g.constant(v))); },
      Tensor::vector({1.7}));
}

TEST_CASE("relu coordinates crossing the kink are reported, not compared") {
  // One input sits exactly on the kink; the probe interval crosses it.
  const Tensor x = Tensor::vector({0.0, 0.5, -0.5});
  const auto r = grad_check([](Graph&, Var v) { return sum(relu(v)); }, x);
  CHECK(r.nondifferentiable == std::vector<std::size_t>{0});
  CHECK(r.checked == 2);
  CHECK(r.max_relative_error < 1e-9);
}

TEST_CASE("unused leaves get zero gradients and backward needs a scalar") {
  Graph g;
  const Var a = g.leaf(Tensor::vector({1.0, 2.0}));
  const Var b = g.leaf(Tensor::vector({3.0, 4.0}));
  g.backward(sum(mul(a, a)));
  CHECK(g.grad(a)[0] == doctest::Approx(2.0));
  CHECK(g.grad(a)[1] == doctest::Approx(4.0));
  CHECK(g.grad(b)[0] == 0.0);
  CHECK_THROWS_AS(g.backward(a), ShapeError);
}

TEST_CASE("shape mismatches throw ShapeError naming the op") {
  Graph g;
  const Var a = g.constant(Tensor({2, 3}));
  const Var b = g.constant(Tensor({2, 3}));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, g.constant(Tensor({3}))), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
}

TEST_CASE("grad_check rejects step sizes outside (0, 1e-3]") {
  const auto f = [](Graph&, Var v) { return sum(v); };
  CHECK_THROWS_AS(grad_check(f, Tensor::vector({1.0}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(f, Tensor::vector({1.0}), 1e-2), std::invalid_argument);
}

TEST_CASE("truncate keeps a reusable prefix") {
  Graph g;
  const Var w = g.constant(Tensor::vector({2.0}));
  const std::size_t prefix = g.size();
  for (int i = 0; i < 3; ++i) {
    g.truncate(prefix);
    const Var x = g.leaf(Tensor::vector({static_cast<double>(i)}));
    g.backward(sum(mul(w, mul(x, x))));
    CHECK(g.grad(x)[0] == doctest::Approx(4.0 * i));
    CHECK(g.size() > prefix);
  }
}
