// tests/test_tensor_core.cpp

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "akvsr/autograd.hpp"
#include "akvsr/errors.hpp"
#include "akvsr/gradcheck.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace akvsr;
using akvsr::testing::random_extent;
using akvsr::testing::random_tensor;

TEST_CASE("matmul hand examples") {
  auto id = Var::constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto b = Var::constant(Tensor::matrix({{3, 4}, {5, 6}}));
  CHECK(matmul(id, b).value().identical(b.value()));

  auto r = matmul(Var::constant(Tensor::matrix({{1, 2}})), Var::constant(Tensor::matrix({{3}, {4}})));
  CHECK(r.value().shape() == Shape{1, 1});
  CHECK(r.item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Var::constant(Tensor({2, 3}));
  auto b = Var::constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum equals ones * b^T") {
  std::mt19937_64 rng(1);
  auto a = Var::leaf(random_tensor({3, 4}, rng), true);
  auto b = Var::leaf(random_tensor({4, 2}, rng), true);
  auto g = backward(sum(matmul(a, b)));
  const Tensor& ga = g.at(a);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) CHECK(ga(i, k) == doctest::Approx(b.value()(k, 0) + b.value()(k, 1)));
  auto rep = grad_check([&] { return sum(matmul(a, b)); }, {{"a", a}, {"b", b}}, 1e-5, 1e-6);
  CHECK(rep.pass);
}

TEST_CASE("softmax_rows examples") {
  auto u = softmax_rows(Var::constant(Tensor::matrix({{0, 0, 0}})), 1.0);
  for (double v : u.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto big = softmax_rows(Var::constant(Tensor::matrix({{1000, 0}})), 1.0);
  CHECK(big.value().all_finite());
  CHECK(big.value()[0] == doctest::Approx(1.0));
  CHECK(big.value()[1] < 1e-300);

  // 40-digit reference evaluation.
  auto s = softmax_rows(Var::constant(Tensor::matrix({{1, 2, 3}})), 1.0);
  CHECK(std::abs(s.value()[0] - 0.0900305731703804579980221) < 1e-12);
  CHECK(std::abs(s.value()[1] - 0.2447284710547976524729596) < 1e-12);
  CHECK(std::abs(s.value()[2] - 0.6652409557748218895290183) < 1e-12);

  CHECK_THROWS_AS(softmax_rows(Var::constant(Tensor::matrix({{1}})), 0.0), ParameterError);
  CHECK_THROWS_AS(softmax_rows(Var::constant(Tensor::matrix({{1}})), -2.0), ParameterError);
}

TEST_CASE("softmax rows sum to one (property)") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_extent(rng, 1, 6), n = random_extent(rng, 1, 9);
    const double spread = std::uniform_real_distribution<double>(0.1, 500.0)(rng);
    const double sc = std::uniform_real_distribution<double>(0.05, 5.0)(rng);
    auto y = softmax_rows(Var::constant(random_tensor({m, n}, rng, -spread, spread)), sc);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (double v : y.value().row(i)) s += v;
      REQUIRE(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("layer_norm examples") {
  auto gamma = Var::constant(Tensor({3}, 1.0));
  auto beta = Var::constant(Tensor({3}, 0.0));
  auto c = layer_norm(Var::constant(Tensor::matrix({{5, 5, 5}})), gamma, beta, 1e-5);
  for (double v : c.value().data()) CHECK(v == 0.0);

  auto g2 = Var::constant(Tensor({2}, 1.0));
  auto b2 = Var::constant(Tensor({2}, 0.0));
  auto s = layer_norm(Var::constant(Tensor::matrix({{1, -1}})), g2, b2, 1e-15);
  CHECK(s.value()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.value()[1] == doctest::Approx(-1.0).epsilon(1e-12));

  CHECK_THROWS_AS(layer_norm(Var::constant(Tensor({2, 4})), g2, b2), DimensionError);
}

TEST_CASE("layer_norm statistics (property)") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_extent(rng, 1, 5), d = random_extent(rng, 2, 16);
    auto x = Var::constant(random_tensor({m, d}, rng, -10.0, 10.0));
    auto y = layer_norm(x, Var::constant(Tensor({d}, 1.0)), Var::constant(Tensor({d}, 0.0)), 1e-9);
    for (std::size_t i = 0; i < m; ++i) {
      double mu = 0.0, var = 0.0;
      for (double v : y.value().row(i)) mu += v;
      mu /= static_cast<double>(d);
      for (double v : y.value().row(i)) var += (v - mu) * (v - mu);
      var /= static_cast<double>(d);
      REQUIRE(std::abs(mu) <= 1e-10);
      REQUIRE(std::abs(var - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("layer_norm gradient on 2x4 input") {
  std::mt19937_64 rng(4);
  auto x = Var::leaf(random_tensor({2, 4}, rng), true);
  auto g = Var::leaf(random_tensor({4}, rng, 0.5, 1.5), true);
  auto b = Var::leaf(random_tensor({4}, rng), true);
  auto w = Var::constant(random_tensor({2, 4}, rng));
  auto rep = grad_check([&] { return sum(mul(layer_norm(x, g, b, 1e-5), w)); }, {{"x", x}, {"gamma", g}, {"beta", b}},
                        1e-5, 1e-5);
  CHECK_MESSAGE(rep.pass, rep.failure);
}

TEST_CASE("logsumexp examples") {
  CHECK(logsumexp(Var::constant(Tensor::vector({0.0, 0.0}))).item() == doctest::Approx(std::log(2.0)));
  CHECK(logsumexp(Var::constant(Tensor::vector({kNegInf, 0.0}))).item() == 0.0);
  const double big = logsumexp(Var::constant(Tensor::vector({710.0, 709.0}))).item();
  CHECK(std::isfinite(big));
  CHECK(std::abs(big - 710.313261687518222834049) < 1e-12);
  CHECK(logsumexp(Var::constant(Tensor::vector({kNegInf, kNegInf}))).item() == kNegInf);
}

TEST_CASE("logsumexp of all -inf row has zero gradient") {
  auto x = Var::leaf(Tensor::matrix({{kNegInf, kNegInf}, {0.0, 1.0}}), true);
  auto y = logsumexp(x);
  auto g = backward(take(y, std::vector<std::ptrdiff_t>{1}));
  CHECK(g.at(x)(0, 0) == 0.0);
  CHECK(g.at(x)(1, 0) + g.at(x)(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("backward basics") {
  auto x = Var::leaf(Tensor({2, 3}, 0.7), true);
  auto g = backward(sum(x));
  for (double v : g.at(x).data()) CHECK(v == 1.0);

  auto a = Var::leaf(Tensor::scalar(2.0), true);
  auto b = Var::leaf(Tensor::scalar(3.0), true);
  auto gm = backward(mul(a, b));
  CHECK(gm.at(a).item() == 3.0);
  CHECK(gm.at(b).item() == 2.0);

  CHECK_THROWS_AS(backward(x), ContractError);
}

TEST_CASE("backward leaves non-trainable leaves out of the map") {
  auto w = Var::leaf(Tensor({2, 2}, 1.0), true);
  auto frozen = Var::leaf(Tensor({2, 2}, 0.5), false);
  auto g = backward(sum(matmul(w, frozen)));
  CHECK(g.contains(w));
  CHECK_FALSE(g.contains(frozen));
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(5);
  auto x = Var::leaf(random_tensor({4, 5}, rng), true);
  auto w = Var::leaf(random_tensor({5, 5}, rng), true);
  auto build = [&] {
    auto h = softmax_rows(matmul(x, w), 0.7);
    return sum(mul(h, log_softmax_rows(matmul(h, w))));
  };
  auto r1 = build();
  auto g1 = backward(r1);
  Tensor gx = g1.at(x), gw = g1.at(w);
  auto r2 = build();
  auto g2 = backward(r2);
  CHECK(r1.value().identical(r2.value()));
  CHECK(gx.identical(g2.at(x)));
  CHECK(gw.identical(g2.at(w)));
}

TEST_CASE("grad_check scalar square") {
  auto x = Var::leaf(Tensor::scalar(3.0), true);
  auto rep = grad_check([&] { return mul(x, x); }, {{"x", x}});
  REQUIRE(rep.params.size() == 1);
  CHECK(rep.params[0].analytic == doctest::Approx(6.0));
  CHECK(std::abs(rep.params[0].numeric - 6.0) < 1e-8);
  CHECK(rep.pass);
}

TEST_CASE("grad_check softmax cross-entropy on random logits") {
  std::mt19937_64 rng(6);
  auto logits = Var::leaf(random_tensor({3, 5}, rng, -2, 2), true);
  std::vector<std::ptrdiff_t> target = {1, 5 + 3, 10 + 0};
  auto rep = grad_check([&] { return scale(sum(take(log_softmax_rows(logits), target)), -1.0); }, {{"logits", logits}},
                        1e-5, 1e-5);
  CHECK_MESSAGE(rep.pass, rep.failure);
}

TEST_CASE("grad_check reports non-finite gradients with location") {
  auto x = Var::leaf(Tensor::vector({1.0, 0.0}), true);
  auto rep = grad_check([&] { return sum(scale(x, std::numeric_limits<double>::infinity())); }, {{"x", x}});
  CHECK_FALSE(rep.pass);
  CHECK(rep.failure.find("x[") != std::string::npos);
}

namespace {

// Runs grad_check for `trials` random instances of a unary op.
void check_op_property(const char* name, int trials, const std::function<Var(const Var&, std::mt19937_64&)>& op,
                       std::size_t max_m, std::size_t max_n) {
  std::mt19937_64 rng(std::hash<std::string>{}(name));
  for (int t = 0; t < trials; ++t) {
    const auto m = random_extent(rng, 1, max_m), n = random_extent(rng, 1, max_n);
    auto x = Var::leaf(random_tensor({m, n}, rng), true);
    auto probe_seed = rng();
    auto f = [&] {
      std::mt19937_64 r(probe_seed);
      auto y = op(x, r);
      // random linear read-out so every output entry matters
      auto w = Var::constant(random_tensor(y.shape(), r));
      return sum(mul(y, w));
    };
    auto rep = grad_check(f, {{name, x}}, 1e-5, 1e-4);
    REQUIRE_MESSAGE(rep.pass, name << ": " << rep.failure);
  }
}

}  // namespace

TEST_CASE("every differentiable op passes grad_check on 100 random trials") {
  check_op_property("add", 100, [](const Var& x, std::mt19937_64&) { return add(x, mul(x, x)); }, 4, 4);
  check_op_property("sub", 100, [](const Var& x, std::mt19937_64&) { return sub(mul(x, x), x); }, 4, 4);
  check_op_property("scale", 100, [](const Var& x, std::mt19937_64&) { return scale(x, -2.5); }, 4, 4);
  check_op_property("relu", 100, [](const Var& x, std::mt19937_64&) { return relu(x); }, 4, 4);
  check_op_property(
      "add_row", 100,
      [](const Var& x, std::mt19937_64&) {
        return add_row(x, Var::leaf(Tensor(Shape{x.cols()}, 0.3), false));
      },
      4, 4);
  check_op_property(
      "matmul", 100,
      [](const Var& x, std::mt19937_64& r) {
        return matmul(x, Var::constant(random_tensor({x.cols(), 3}, r)));
      },
      4, 4);
  check_op_property(
      "matmul_nt", 100, [](const Var& x, std::mt19937_64&) { return matmul_nt(x, x); }, 4, 4);
  check_op_property("transpose", 100, [](const Var& x, std::mt19937_64&) { return transpose(x); }, 4, 4);
  check_op_property("softmax_rows", 100, [](const Var& x, std::mt19937_64&) { return softmax_rows(x, 0.8); }, 4, 5);
  check_op_property("log_softmax_rows", 100, [](const Var& x, std::mt19937_64&) { return log_softmax_rows(x); }, 4,
                    5);
  check_op_property(
      "causal_mask", 100,
      [](const Var& x, std::mt19937_64&) { return softmax_rows(causal_mask(matmul_nt(x, x)), 1.0); }, 4, 3);
  check_op_property(
      "layer_norm", 100,
      [](const Var& x, std::mt19937_64& r) {
        return layer_norm(x, Var::constant(random_tensor({x.cols()}, r, 0.5, 1.5)),
                          Var::constant(random_tensor({x.cols()}, r)), 1e-5);
      },
      4, 6);
  check_op_property("logsumexp", 100, [](const Var& x, std::mt19937_64&) { return logsumexp(x); }, 4, 5);
  check_op_property(
      "take", 100,
      [](const Var& x, std::mt19937_64& r) {
        std::vector<std::ptrdiff_t> idx;
        for (int i = 0; i < 5; ++i)
          idx.push_back(std::uniform_int_distribution<std::ptrdiff_t>(-1, static_cast<std::ptrdiff_t>(x.value().size()) - 1)(r));
        return take(x, idx, 0.0);
      },
      4, 4);
  check_op_property(
      "gather_rows", 100,
      [](const Var& x, std::mt19937_64& r) {
        std::vector<std::size_t> idx;
        for (int i = 0; i < 4; ++i) idx.push_back(random_extent(r, 0, x.rows() - 1));
        return gather_rows(x, idx);
      },
      4, 4);
  check_op_property(
      "slice_cols", 100,
      [](const Var& x, std::mt19937_64& r) {
        const auto b = random_extent(r, 0, x.cols() - 1);
        return slice_cols(x, b, x.cols());
      },
      4, 5);
  check_op_property(
      "concat_cols", 100,
      [](const Var& x, std::mt19937_64&) {
        std::vector<Var> parts = {x, mul(x, x), x};
        return concat_cols(parts);
      },
      4, 3);
  check_op_property(
      "stack_rows", 100,
      [](const Var& x, std::mt19937_64&) {
        std::vector<Var> rows = {reshape(x, {x.value().size()}), reshape(mul(x, x), {x.value().size()})};
        return stack_rows(rows);
      },
      4, 3);
}

TEST_CASE("gather_rows out of range names position") {
  auto t = Var::constant(Tensor({2, 3}));
  std::vector<std::size_t> idx = {0, 5};
  CHECK_THROWS_AS(gather_rows(t, idx), IndexError);
}

TEST_CASE("primitive ops keep finite inputs finite") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    auto x = Var::constant(random_tensor({3, 4}, rng, -50, 50));
    auto g = Var::constant(Tensor({4}, 1.0)), b = Var::constant(Tensor({4}, 0.0));
    CHECK(softmax_rows(x, 0.01).value().all_finite());
    CHECK(log_softmax_rows(x).value().all_finite());
    CHECK(layer_norm(x, g, b).value().all_finite());
    CHECK(logsumexp(x).value().all_finite());
    CHECK(matmul_nt(x, x).value().all_finite());
  }
}
