// src/ctc.cpp

#include "akvsr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "akvsr/errors.hpp"

namespace akvsr {

namespace {

void check_instance(const Tensor& lp, std::span<const int> target) {
  if (lp.rank() != 2) throw DimensionError("ctc: log-probs must be [T x V], got " + shape_str(lp.shape()));
  const auto V = static_cast<int>(lp.cols());
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0) throw ContractError("ctc: target position " + std::to_string(i) + " is blank");
    if (target[i] < 0 || target[i] >= V)
      throw RangeError("ctc: target token " + std::to_string(target[i]) + " outside vocabulary of " +
                       std::to_string(V));
  }
}

}  // namespace

std::size_t ctc_min_frames(std::span<const int> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

CtcResult ctc_loss(const Var& logProbs, std::span<const int> target) {
  const Tensor& lp = logProbs.value();
  check_instance(lp, target);
  const std::size_t T = lp.rows(), V = lp.cols();
  if (T < ctc_min_frames(target))
    return {Var::constant(Tensor::vector({std::numeric_limits<double>::infinity()})), false};

  // Blank-extended target: -, y1, -, y2, ..., yL, -
  const std::size_t S = 2 * target.size() + 1;
  std::vector<int> ext(S, 0);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];

  auto emission = [&](std::size_t t) {
    std::vector<std::ptrdiff_t> idx(S);
    for (std::size_t s = 0; s < S; ++s) idx[s] = static_cast<std::ptrdiff_t>(t * V + static_cast<std::size_t>(ext[s]));
    return take(logProbs, idx);
  };

  std::vector<std::ptrdiff_t> init(S, -1);
  init[0] = 0;
  if (S > 1) init[1] = static_cast<std::ptrdiff_t>(ext[1]);
  Var alpha = take(logProbs, init);

  // Predecessor index tables; -1 reads as log 0.
  std::vector<std::ptrdiff_t> stay(S), step1(S), step2(S);
  for (std::size_t s = 0; s < S; ++s) {
    stay[s] = static_cast<std::ptrdiff_t>(s);
    step1[s] = s >= 1 ? static_cast<std::ptrdiff_t>(s - 1) : -1;
    step2[s] = (s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2]) ? static_cast<std::ptrdiff_t>(s - 2) : -1;
  }

  for (std::size_t t = 1; t < T; ++t) {
    const Var cand[3] = {take(alpha, stay), take(alpha, step1), take(alpha, step2)};
    alpha = add(logsumexp(transpose(stack_rows(cand))), emission(t));
  }

  std::vector<std::ptrdiff_t> last = {static_cast<std::ptrdiff_t>(S - 1)};
  if (S > 1) last.push_back(static_cast<std::ptrdiff_t>(S - 2));
  return {scale(logsumexp(take(alpha, last)), -1.0), true};
}

double ctc_bruteforce(const Tensor& logProbs, std::span<const int> target) {
  check_instance(logProbs, target);
  const std::size_t T = logProbs.rows(), V = logProbs.cols();
  double paths = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    paths *= static_cast<double>(V);
    if (paths > 1e6) throw SizeError("ctc_bruteforce: " + std::to_string(V) + "^" + std::to_string(T) +
                                     " paths exceeds the 1e6 limit");
  }
  const auto total = static_cast<std::size_t>(paths);

  std::vector<std::size_t> path(T, 0);
  std::vector<int> collapsed;
  double mass = 0.0;
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t code = n;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = code % V;
      code /= V;
    }
    collapsed.clear();
    for (std::size_t t = 0; t < T; ++t) {
      if (path[t] == 0) continue;
      if (t > 0 && path[t] == path[t - 1]) continue;
      collapsed.push_back(static_cast<int>(path[t]));
    }
    if (collapsed.size() != target.size() || !std::equal(collapsed.begin(), collapsed.end(), target.begin())) continue;
    double logp = 0.0;
    for (std::size_t t = 0; t < T; ++t) logp += logProbs(t, path[t]);
    mass += std::exp(logp);
  }
  return mass > 0.0 ? -std::log(mass) : std::numeric_limits<double>::infinity();
}

std::vector<int> ctc_greedy_decode(const Tensor& logProbs) {
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < logProbs.rows(); ++t) {
    int best = 0;
    for (std::size_t v = 1; v < logProbs.cols(); ++v)
      if (logProbs(t, v) > logProbs(t, static_cast<std::size_t>(best))) best = static_cast<int>(v);
    if (best != 0 && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

namespace {

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

CtcPrefixScorer::CtcPrefixScorer(Tensor logProbs) : lp_(std::move(logProbs)) {
  if (lp_.rank() != 2) throw DimensionError("ctc prefix scorer: log-probs must be [T x V]");
}

CtcPrefixScorer::State CtcPrefixScorer::initial() const {
  const std::size_t T = lp_.rows();
  State g;
  g.nonBlank.assign(T, kNegInf);
  g.blank.resize(T);
  double acc = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    acc += lp_(t, 0);
    g.blank[t] = acc;
  }
  return g;
}

CtcPrefixScorer::State CtcPrefixScorer::extend(const State& g, int token) const {
  if (token <= 0 || static_cast<std::size_t>(token) >= lp_.cols())
    throw RangeError("ctc prefix scorer: token " + std::to_string(token) + " outside vocabulary");
  const std::size_t T = lp_.rows();
  const auto c = static_cast<std::size_t>(token);
  State h;
  h.last = token;
  h.nonBlank.assign(T, kNegInf);
  h.blank.assign(T, kNegInf);
  // Mass that may enter c at frame t: prefix complete by t-1 and, when c
  // repeats the last token, separated from it by a blank.
  auto entry = [&](std::size_t t) {
    if (t == 0) return g.last < 0 ? 0.0 : kNegInf;
    return g.last == token ? g.blank[t - 1] : log_add(g.blank[t - 1], g.nonBlank[t - 1]);
  };
  double psi = kNegInf;
  for (std::size_t t = 0; t < T; ++t) {
    const double phi = entry(t);
    const double stay = t > 0 ? h.nonBlank[t - 1] : kNegInf;
    h.nonBlank[t] = log_add(stay, phi) + lp_(t, c);
    if (t > 0) h.blank[t] = log_add(h.blank[t - 1], h.nonBlank[t - 1]) + lp_(t, 0);
    psi = log_add(psi, phi + lp_(t, c));
  }
  h.prefixScore = psi;
  return h;
}

double CtcPrefixScorer::final_score(const State& g) const {
  const std::size_t T = lp_.rows();
  return log_add(g.nonBlank[T - 1], g.blank[T - 1]);
}

}  // namespace akvsr
