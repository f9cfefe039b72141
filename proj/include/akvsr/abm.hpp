// akvsr/abm.hpp
//
// Cross-attention from visual frames into the compact audio memory, with the
// retrieved vectors injected back residually. Stacked, one weight set per
// layer.

#pragma once

#include <string>
#include <vector>

#include "akvsr/memory.hpp"
#include "akvsr/nn.hpp"

namespace akvsr {

struct AbmConfig {
  int d = 32;
  int dk = 32;
  int dv = 32;
  int heads = 4;
  double tau = 0.0;  // <= 0 selects sqrt(dk / heads)

  void validate() const;
  double resolved_tau() const;
};

struct AbmLayer {
  Var wq;  // [d x dk]
  Var wk;  // [d x dk]
  Var wv;  // [d x dv]
  Var wo;  // [dv x d]
  LayerNormParams ln;
  int heads = 1;
  double tau = 1.0;

  static AbmLayer make(const AbmConfig& config, Rng& rng);
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// One [T_v x N] row-stochastic matrix per head.
std::vector<Var> attention_scores(const AbmLayer& layer, const Var& fv, const CompactAudioMemory& memory);
// [T_v x dv]: head h reads A_h against its slice of M W_v.
Var reconstruct(const AbmLayer& layer, std::span<const Var> scores, const CompactAudioMemory& memory);
// LN(fv + m' W_o)
Var inject(const AbmLayer& layer, const Var& fv, const Var& reconstructed);

struct AbmStack {
  AbmConfig config;
  std::vector<AbmLayer> layers;

  static AbmStack make(const AbmConfig& config, int depth, Rng& rng);
  int depth() const { return static_cast<int>(layers.size()); }
  void collect(ParamSet& ps, const std::string& prefix = "abm") const;
};

Var abm_forward(const AbmStack& stack, const Var& fv, const CompactAudioMemory& memory);

}  // namespace akvsr
