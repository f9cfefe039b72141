// tests/test_util.hpp
#pragma once

#include <random>

#include "akvsr/tensor.hpp"

namespace akvsr::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline std::size_t random_extent(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline bool identical(const Tensor& a, const Tensor& b) { return a.identical(b); }

}  // namespace akvsr::testing

using akvsr::testing::identical;
