// tests/test_abm.cpp

#include <algorithm>
#include <cmath>
#include <random>

#include "abm_oracle.hpp"
#include "akvsr/abm.hpp"
#include "akvsr/errors.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace akvsr;
using akvsr::testing::random_extent;
using akvsr::testing::random_tensor;

namespace {

AbmLayer random_layer(int d, int dk, int dv, int heads, std::uint64_t seed) {
  Rng rng(seed);
  AbmConfig cfg{d, dk, dv, heads, 0.0};
  AbmLayer l = AbmLayer::make(cfg, rng);
  std::mt19937_64 r(seed + 1);
  l.ln.gamma.mutable_value() = random_tensor({static_cast<std::size_t>(d)}, r, 0.5, 1.5);
  l.ln.beta.mutable_value() = random_tensor({static_cast<std::size_t>(d)}, r);
  return l;
}

CompactAudioMemory random_memory(std::size_t N, std::size_t d, std::mt19937_64& r, bool trainable = false) {
  return {Var::leaf(random_tensor({N, d}, r), trainable), !trainable};
}

}  // namespace

TEST_CASE("tau defaults to sqrt(dk / heads)") {
  AbmConfig c{32, 32, 32, 4, 0.0};
  CHECK(c.resolved_tau() == doctest::Approx(std::sqrt(8.0)));
  c.tau = 2.5;
  CHECK(c.resolved_tau() == 2.5);
  CHECK_THROWS_AS((AbmConfig{32, 30, 32, 4, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((AbmConfig{32, 32, 30, 4, 0.0}.validate()), ConfigError);
}

TEST_CASE("single-head layer matches the scalar oracle on 100 random inputs") {
  std::mt19937_64 r(1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = static_cast<int>(random_extent(r, 2, 8));
    const int dk = static_cast<int>(random_extent(r, 1, 6));
    const int dv = static_cast<int>(random_extent(r, 1, 6));
    AbmLayer layer = random_layer(d, dk, dv, 1, r());
    layer.tau = std::uniform_real_distribution<double>(0.3, 3.0)(r);
    const auto Tv = random_extent(r, 1, 6), N = random_extent(r, 1, 9);
    auto fv = Var::constant(random_tensor({Tv, static_cast<std::size_t>(d)}, r, -2, 2));
    auto mem = random_memory(N, static_cast<std::size_t>(d), r);

    const auto scores = attention_scores(layer, fv, mem);
    const auto m = reconstruct(layer, scores, mem);
    const auto out = inject(layer, fv, m);
    const auto oracle = abm_oracle::single_head(fv.value(), mem.slots.value(), layer.wq.value(), layer.wk.value(),
                                                layer.wv.value(), layer.wo.value(), layer.ln.gamma.value(),
                                                layer.ln.beta.value(), layer.tau, layer.ln.eps);
    worst = std::max({worst, max_abs_diff(scores[0].value(), oracle.scores), max_abs_diff(m.value(), oracle.recon),
                      max_abs_diff(out.value(), oracle.out)});

    AbmStack stack;
    stack.config = {d, dk, dv, 1, layer.tau};
    stack.layers = {layer};
    worst = std::max(worst, max_abs_diff(abm_forward(stack, fv, mem).value(), oracle.out));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("attention rows are stochastic for every head") {
  std::mt19937_64 r(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int heads = static_cast<int>(random_extent(r, 1, 4));
    const int d = 8;
    AbmLayer layer = random_layer(d, 4 * heads, 2 * heads, heads, r());
    auto fv = Var::constant(random_tensor({random_extent(r, 1, 9), 8}, r, -3, 3));
    auto mem = random_memory(random_extent(r, 1, 20), 8, r);
    const auto scores = attention_scores(layer, fv, mem);
    REQUIRE(scores.size() == static_cast<std::size_t>(heads));
    for (const auto& A : scores) {
      REQUIRE(A.cols() == mem.size());
      for (std::size_t t = 0; t < A.rows(); ++t) {
        double s = 0.0;
        for (std::size_t n = 0; n < A.cols(); ++n) s += A.value()(t, n);
        REQUIRE(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("degenerate score cases") {
  std::mt19937_64 r(3);
  AbmLayer layer = random_layer(8, 8, 8, 2, 4);
  auto fv = Var::constant(random_tensor({5, 8}, r));
  layer.wq.mutable_value().fill(0.0);
  auto mem = random_memory(6, 8, r);
  for (const auto& A : attention_scores(layer, fv, mem))
    for (double v : A.value().data()) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  AbmLayer layer2 = random_layer(8, 8, 8, 2, 5);
  auto one = random_memory(1, 8, r);
  for (const auto& A : attention_scores(layer2, fv, one))
    for (double v : A.value().data()) CHECK(v == 1.0);

  CHECK_THROWS_AS(attention_scores(layer2, Var::constant(Tensor({5, 7})), mem), DimensionError);
  CHECK_THROWS_AS(attention_scores(layer2, fv, random_memory(3, 6, r)), DimensionError);
}

TEST_CASE("reconstruction endpoints and convex hull") {
  std::mt19937_64 r(6);
  AbmLayer layer = random_layer(8, 8, 6, 1, 7);
  auto mem = random_memory(5, 8, r);
  const Tensor proj = matmul(mem.slots, layer.wv).value();

  Tensor onehot({3, 5}, 0.0);
  onehot(0, 2) = onehot(1, 0) = onehot(2, 4) = 1.0;
  const std::vector<Var> A = {Var::constant(onehot)};
  const Tensor m = reconstruct(layer, A, mem).value();
  const std::size_t pick[3] = {2, 0, 4};
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 6; ++c) CHECK(m(t, c) == doctest::Approx(proj(pick[t], c)).epsilon(1e-15));

  const std::vector<Var> U = {Var::constant(Tensor({2, 5}, 0.2))};
  const Tensor mu = reconstruct(layer, U, mem).value();
  for (std::size_t c = 0; c < 6; ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < 5; ++n) mean += proj(n, c) / 5.0;
    CHECK(mu(0, c) == doctest::Approx(mean).epsilon(1e-12));
  }

  for (int trial = 0; trial < 100; ++trial) {
    const int heads = static_cast<int>(random_extent(r, 1, 3));
    AbmLayer l = random_layer(8, 2 * heads, 2 * heads, heads, r());
    auto mm = random_memory(random_extent(r, 1, 10), 8, r);
    auto fv = Var::constant(random_tensor({random_extent(r, 1, 6), 8}, r, -3, 3));
    const Tensor p = matmul(mm.slots, l.wv).value();
    const Tensor rec = reconstruct(l, attention_scores(l, fv, mm), mm).value();
    for (std::size_t c = 0; c < rec.cols(); ++c) {
      double lo = p(0, c), hi = p(0, c);
      for (std::size_t n = 1; n < p.rows(); ++n) {
        lo = std::min(lo, p(n, c));
        hi = std::max(hi, p(n, c));
      }
      for (std::size_t t = 0; t < rec.rows(); ++t) {
        REQUIRE(rec(t, c) >= lo - 1e-12);
        REQUIRE(rec(t, c) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("inject with zero output weights is layer norm of the visual features") {
  std::mt19937_64 r(8);
  AbmLayer layer = random_layer(8, 8, 8, 2, 9);
  layer.wo.mutable_value().fill(0.0);
  layer.ln.gamma.mutable_value().fill(1.0);
  layer.ln.beta.mutable_value().fill(0.0);
  auto fv = Var::constant(random_tensor({4, 8}, r));
  auto m = Var::constant(random_tensor({4, 8}, r, -5, 5));
  CHECK(max_abs_diff(inject(layer, fv, m).value(), layer.ln(fv).value()) == 0.0);
}

TEST_CASE("output length is T_v for any memory size") {
  std::mt19937_64 r(10);
  Rng rng(11);
  auto stack = AbmStack::make({8, 8, 8, 2, 0.0}, 2, rng);
  for (std::size_t N : {8u, 16u, 33u, 64u})
    for (std::size_t Tv : {1u, 3u, 11u}) {
      auto out = abm_forward(stack, Var::constant(random_tensor({Tv, 8}, r)), random_memory(N, 8, r));
      CHECK(out.shape() == Shape{Tv, 8});
    }
}

TEST_CASE("stack depth behaviour") {
  std::mt19937_64 r(12);
  Rng rng(13);
  auto fv = Var::constant(random_tensor({5, 8}, r));
  auto mem = random_memory(6, 8, r);
  auto empty = AbmStack::make({8, 8, 8, 2, 0.0}, 0, rng);
  CHECK(identical(abm_forward(empty, fv, mem).value(), fv.value()));

  auto two = AbmStack::make({8, 8, 8, 2, 0.0}, 2, rng);
  AbmStack one = two;
  one.layers.resize(1);
  const auto& l0 = two.layers[0];
  const Tensor manual = inject(l0, fv, reconstruct(l0, attention_scores(l0, fv, mem), mem)).value();
  CHECK(identical(abm_forward(one, fv, mem).value(), manual));
  CHECK(max_abs_diff(abm_forward(two, fv, mem).value(), manual) > 1e-6);
  CHECK_THROWS_AS(AbmStack::make({8, 8, 8, 2, 0.0}, -1, rng), ConfigError);

  ParamSet ps;
  two.collect(ps);
  for (const char* n : {"abm.layer0.wq", "abm.layer0.wk", "abm.layer0.wv", "abm.layer0.wo", "abm.layer0.ln.gamma",
                        "abm.layer0.ln.beta", "abm.layer1.wq"})
    CHECK_MESSAGE(ps.contains(n), n);
}

TEST_CASE("stack is frame-permutation equivariant") {
  std::mt19937_64 r(14);
  Rng rng(15);
  auto stack = AbmStack::make({8, 8, 8, 4, 0.0}, 2, rng);
  for (int trial = 0; trial < 30; ++trial) {
    const auto T = random_extent(r, 2, 8);
    Tensor x = random_tensor({T, 8}, r);
    std::vector<std::size_t> perm(T);
    for (std::size_t i = 0; i < T; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), r);
    Tensor y({T, 8});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < 8; ++c) y(t, c) = x(perm[t], c);
    auto mem = random_memory(random_extent(r, 1, 10), 8, r);
    const Tensor ox = abm_forward(stack, Var::constant(x), mem).value();
    const Tensor oy = abm_forward(stack, Var::constant(y), mem).value();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < 8; ++c) REQUIRE(std::abs(oy(t, c) - ox(perm[t], c)) < 1e-12);
  }
}

TEST_CASE("frozen memory gets no gradient; trainable memory does") {
  std::mt19937_64 r(16);
  Rng rng(17);
  auto stack = AbmStack::make({8, 8, 8, 2, 0.0}, 2, rng);
  auto fv = Var::leaf(random_tensor({4, 8}, r), true);
  auto frozen = freeze({Var::leaf(random_tensor({5, 8}, r), true), false});
  auto w = Var::constant(random_tensor({4, 8}, r));
  auto g = backward(sum(mul(abm_forward(stack, fv, frozen), w)));
  CHECK_FALSE(g.contains(frozen.slots));
  CHECK(g.contains(fv));

  CompactAudioMemory live{Var::leaf(frozen.slots.value(), true), false};
  auto g2 = backward(sum(mul(abm_forward(stack, fv, live), w)));
  CHECK(g2.contains(live.slots));
}

TEST_CASE("gradient check through the stack, T_v=3") {
  std::mt19937_64 r(18);
  Rng rng(19);
  auto stack = AbmStack::make({8, 4, 4, 2, 0.0}, 2, rng);
  ParamSet ps;
  stack.collect(ps);
  auto fv = Var::leaf(random_tensor({3, 8}, r), true);
  CompactAudioMemory mem{Var::leaf(random_tensor({5, 8}, r), true), false};
  auto w = Var::constant(random_tensor({3, 8}, r));
  std::vector<NamedVar> params = ps.items();
  params.push_back({"fv", fv});
  params.push_back({"memory.slots", mem.slots});
  auto rep = grad_check([&] { return sum(mul(abm_forward(stack, fv, mem), w)); }, params, 1e-5, 1e-4);
  CHECK_MESSAGE(rep.pass, rep.failure);

  AbmLayer& l0 = stack.layers[0];
  auto m = Var::leaf(random_tensor({3, 4}, r), true);
  auto rep2 = grad_check([&] { return sum(mul(inject(l0, fv, m), w)); },
                         {{"fv", fv}, {"m", m}, {"wo", l0.wo}, {"gamma", l0.ln.gamma}, {"beta", l0.ln.beta}}, 1e-5,
                         1e-4);
  CHECK_MESSAGE(rep2.pass, rep2.failure);
}
