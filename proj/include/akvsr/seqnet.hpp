// akvsr/seqnet.hpp
//
// Pre-norm transformer encoder and autoregressive decoder at toy scale.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "akvsr/nn.hpp"

namespace akvsr {

// blank | phonemes | BOS | EOS | PAD
struct Vocab {
  int phonemes = 0;

  static constexpr int kBlank = 0;
  int size() const { return phonemes + 4; }
  int bos() const { return phonemes + 1; }
  int eos() const { return phonemes + 2; }
  int pad() const { return phonemes + 3; }
  int token(int phoneme) const { return phoneme + 1; }
  bool is_phoneme_token(int t) const { return t >= 1 && t <= phonemes; }

  // Phoneme indices -> token ids, optionally terminated by EOS.
  std::vector<int> encode(std::span<const int> phonemeSeq, bool withEos) const;
};

// [T x d] sinusoidal table.
Tensor sinusoidal_positions(std::size_t T, std::size_t d);

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention make(std::size_t d, int heads, Rng& rng);
  Var operator()(const Var& query, const Var& memory, bool causal) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward make(std::size_t d, std::size_t ff, Rng& rng);
  Var operator()(const Var& x) const { return down(relu(up(x))); }
  void collect(ParamSet& ps, const std::string& prefix) const;
};

struct StackConfig {
  int layers = 2;
  int d = 32;
  int heads = 4;
  int ff = 64;
};

struct EncoderBlock {
  LayerNormParams ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ff;
};

struct EncoderStack {
  StackConfig config;
  std::vector<EncoderBlock> layers;
  LayerNormParams final_ln;  // applied only when layers is non-empty
  bool positional = true;

  static EncoderStack make(const StackConfig& config, Rng& rng);
  void collect(ParamSet& ps, const std::string& prefix) const;
};

Var encode(const EncoderStack& stack, const Var& x);

struct DecoderBlock {
  LayerNormParams ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;
};

struct DecoderStack {
  StackConfig config;
  Vocab vocab;
  Var tokenEmbedding;  // [|vocab| x d]
  std::vector<DecoderBlock> layers;
  LayerNormParams final_ln;
  Linear outputProjection;  // d -> |vocab|

  static DecoderStack make(const StackConfig& config, const Vocab& vocab, Rng& rng);
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// Logits [len(tokens) x |vocab|]; row l depends on tokens[0..l] only.
Var decoder_logits(const DecoderStack& dec, std::span<const int> tokens, const Var& enc);

// Logits for the position after `prefix`; prefix must start with BOS.
Tensor decode_step(const DecoderStack& dec, std::span<const int> prefix, const Var& enc);

// Argmax over phonemes and EOS until EOS or maxLen tokens. Returns phoneme
// tokens only.
std::vector<int> greedy_decode(const DecoderStack& dec, const Var& enc, int maxLen);

}  // namespace akvsr
