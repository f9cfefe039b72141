// tests/test_quantizer.cpp

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "akvsr/errors.hpp"
#include "akvsr/quantizer.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace akvsr;

TEST_CASE("two separated clouds recover their means") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.1);
  Tensor x({200, 3});
  double mean_a[3] = {0, 0, 0}, mean_b[3] = {0, 0, 0};
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      x(i, k) = (i < 100 ? -5.0 : 5.0) + n(rng);
      (i < 100 ? mean_a : mean_b)[k] += x(i, k) / 100.0;
    }
  auto m = fit_kmeans(x, 2, 50, 3);
  const std::size_t a = m.centroids(0, 0) < 0 ? 0 : 1;
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(m.centroids(a, k) - mean_a[k]) < 1e-9);
    CHECK(std::abs(m.centroids(1 - a, k) - mean_b[k]) < 1e-9);
  }
}

TEST_CASE("single cluster is the global mean") {
  std::mt19937_64 rng(2);
  auto x = akvsr::testing::random_tensor({37, 4}, rng);
  auto m = fit_kmeans(x, 1, 10, 0);
  for (std::size_t k = 0; k < 4; ++k) {
    double mu = 0;
    for (std::size_t i = 0; i < 37; ++i) mu += x(i, k);
    CHECK(m.centroids(0, k) == doctest::Approx(mu / 37.0).epsilon(1e-12));
  }
}

TEST_CASE("inertia never increases and every cluster keeps a point (100 trials)") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto M = akvsr::testing::random_extent(rng, 10, 80);
    const auto d = akvsr::testing::random_extent(rng, 1, 5);
    const int N = static_cast<int>(akvsr::testing::random_extent(rng, 2, std::min<std::size_t>(M, 12)));
    auto x = akvsr::testing::random_tensor({M, d}, rng);
    auto m = fit_kmeans(x, N, 100, rng());
    for (std::size_t i = 1; i < m.inertiaHistory.size(); ++i)
      REQUIRE(m.inertiaHistory[i] <= m.inertiaHistory[i - 1] * (1 + 1e-12));
    REQUIRE(m.centroids.all_finite());
    auto labels = quantize(m, x);
    std::set<std::size_t> used(labels.begin(), labels.end());
    REQUIRE(used.size() == static_cast<std::size_t>(N));
  }
}

TEST_CASE("empty clusters are repaired on duplicated data") {
  Tensor x({6, 1}, 1.0);
  x(5, 0) = 2.0;
  auto m = fit_kmeans(x, 3, 20, 0);
  CHECK(m.centroids.all_finite());
  CHECK(m.clusters() == 3);
}

TEST_CASE("fit_kmeans argument errors") {
  CHECK_THROWS_AS(fit_kmeans(Tensor({3, 2}), 4, 10, 0), DataError);
  CHECK_THROWS_AS(fit_kmeans(Tensor({3, 2}), 2, 0, 0), ConfigError);
}

TEST_CASE("quantize tie-break and exact hits") {
  ClusterModel m;
  m.centroids = Tensor::matrix({{0, 0}, {1, 0}, {5, 5}, {3, 3}, {-1, 0}});
  auto labels = quantize(m, Tensor::matrix({{3, 3}, {0, 0}, {0, 0.5}}));
  CHECK(labels[0] == 3);
  CHECK(labels[1] == 0);
  CHECK(labels[2] == 0);
  // (0,0) is equidistant from centroids 1 and 4 once centroid 0 is removed.
  ClusterModel tie;
  tie.centroids = Tensor::matrix({{9, 9}, {1, 0}, {7, 7}, {8, 8}, {-1, 0}});
  CHECK(quantize(tie, Tensor::matrix({{0, 0}}))[0] == 1);
  CHECK_THROWS_AS(quantize(m, Tensor({2, 3})), DimensionError);
}

TEST_CASE("noiseless corpus with N = P gives a phoneme bijection") {
  CorpusConfig cfg;
  cfg.sigmaAudio = 0.0;
  cfg.sigmaVisual = 0.0;
  cfg.speakerScale = 0.0;
  auto c = generate_corpus(cfg, 1, 40, 40);
  auto m = fit_kmeans(stack_audio(c.quantfit), cfg.P, 100, 0);
  auto r = purity_and_leakage(m, c.test);
  CHECK(r.phonemePurity == 1.0);
  std::map<int, std::set<std::size_t>> phone_to_cluster;
  for (const auto& s : c.test) {
    auto l = quantize(m, s.audio);
    for (std::size_t t = 0; t < l.size(); ++t) phone_to_cluster[s.align[t]].insert(l[t]);
  }
  std::set<std::size_t> all;
  for (const auto& [p, cl] : phone_to_cluster) {
    CHECK(cl.size() == 1);
    all.insert(*cl.begin());
  }
  CHECK(all.size() == phone_to_cluster.size());
}

TEST_CASE("purity and NMI reference cases") {
  std::vector<std::size_t> labels = {0, 1, 2, 0, 1, 2};
  std::vector<int> phones = {5, 6, 7, 5, 6, 7};
  std::vector<int> spk = {0, 0, 0, 1, 1, 1};
  auto r = purity_and_leakage(labels, phones, spk);
  CHECK(r.phonemePurity == 1.0);
  CHECK(r.speakerNMI == doctest::Approx(0.0).epsilon(1e-12));

  // Labels fully determined by speaker.
  std::vector<std::size_t> l2 = {0, 0, 0, 1, 1, 1};
  CHECK(normalized_mutual_information(l2, spk) == doctest::Approx(1.0));

  std::mt19937_64 rng(4);
  std::vector<std::size_t> li(10000);
  std::vector<int> si(10000), pi(10000, 0);
  for (std::size_t i = 0; i < li.size(); ++i) {
    li[i] = rng() % 16;
    si[i] = static_cast<int>(rng() % 4);
  }
  CHECK(purity_and_leakage(li, pi, si).speakerNMI < 0.02);

  CHECK_THROWS_AS(purity_and_leakage(std::vector<std::size_t>{}, std::vector<int>{}, std::vector<int>{}), DataError);
}

TEST_CASE("single-speaker fit generalizes across speakers at default config") {
  CorpusConfig cfg;
  auto c = generate_corpus(cfg, 1, 200, 200);
  auto m = fit_kmeans(stack_audio(c.quantfit), 16, 100, 0);
  auto r = purity_and_leakage(m, c.test);
  CHECK(r.phonemePurity >= 0.85);
}
