// tests/abm_oracle.hpp
//
// Scalar-loop evaluation of one single-head bridging layer, written without
// any library op so it can serve as an independent reference.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "akvsr/tensor.hpp"

namespace akvsr::abm_oracle {

struct Result {
  Tensor scores;  // [T_v x N]
  Tensor recon;   // [T_v x dv]
  Tensor out;     // [T_v x d]
};

inline Result single_head(const Tensor& fv, const Tensor& M, const Tensor& Wq, const Tensor& Wk, const Tensor& Wv,
                          const Tensor& Wo, const Tensor& gamma, const Tensor& beta, double tau, double eps) {
  const std::size_t T = fv.rows(), d = fv.cols(), N = M.rows(), dk = Wq.cols(), dv = Wv.cols();
  Result r{Tensor({T, N}), Tensor({T, dv}), Tensor({T, d})};
  std::vector<double> q(dk), k(N * dk), v(N * dv), logit(N);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < dk; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += M(n, i) * Wk(i, j);
      k[n * dk + j] = s;
    }
    for (std::size_t j = 0; j < dv; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += M(n, i) * Wv(i, j);
      v[n * dv + j] = s;
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < dk; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += fv(t, i) * Wq(i, j);
      q[j] = s;
    }
    double top = -INFINITY;
    for (std::size_t n = 0; n < N; ++n) {
      double s = 0.0;
      for (std::size_t j = 0; j < dk; ++j) s += q[j] * k[n * dk + j];
      logit[n] = s / tau;
      top = std::max(top, logit[n]);
    }
    double z = 0.0;
    for (std::size_t n = 0; n < N; ++n) z += std::exp(logit[n] - top);
    for (std::size_t n = 0; n < N; ++n) r.scores(t, n) = std::exp(logit[n] - top) / z;

    for (std::size_t j = 0; j < dv; ++j) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) s += r.scores(t, n) * v[n * dv + j];
      r.recon(t, j) = s;
    }
    std::vector<double> h(d);
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double s = fv(t, i);
      for (std::size_t j = 0; j < dv; ++j) s += r.recon(t, j) * Wo(j, i);
      h[i] = s;
      mean += s;
    }
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (h[i] - mean) * (h[i] - mean);
    var /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) r.out(t, i) = gamma[i] * (h[i] - mean) / std::sqrt(var + eps) + beta[i];
  }
  return r;
}

}  // namespace akvsr::abm_oracle
