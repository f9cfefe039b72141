// akvsr/ctc.hpp
//
// Connectionist temporal classification: the log-space forward recursion
// (built from graph ops, so it differentiates for free), a brute-force path
// enumerator for cross-checking, and greedy collapse decoding. Blank is 0.

#pragma once

#include <span>
#include <vector>

#include "akvsr/autograd.hpp"

namespace akvsr {

struct CtcResult {
  Var loss;  // scalar {1}; +inf when infeasible
  bool feasible = true;
};

// Minimum frame count a target needs: L plus one per adjacent repeat.
std::size_t ctc_min_frames(std::span<const int> target);

// logProbs [T x V], rows log-normalized; target tokens in 1..V-1.
CtcResult ctc_loss(const Var& logProbs, std::span<const int> target);

// Enumerates all V^T paths. Throws SizeError past 1e6 paths.
double ctc_bruteforce(const Tensor& logProbs, std::span<const int> target);

std::vector<int> ctc_greedy_decode(const Tensor& logProbs);

// Prefix probabilities for joint CTC/attention decoding: log of the total
// mass of frame paths whose collapse starts with a given prefix.
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<double> nonBlank;  // log mass ending in the prefix's last token at frame t
    std::vector<double> blank;     // log mass ending in blank at frame t
    int last = -1;
    double prefixScore = 0.0;
  };

  explicit CtcPrefixScorer(Tensor logProbs);

  State initial() const;
  State extend(const State& g, int token) const;
  // Log mass of paths collapsing to exactly the prefix.
  double final_score(const State& g) const;

 private:
  Tensor lp_;
};

}  // namespace akvsr
