// src/seqnet.cpp

#include "akvsr/seqnet.hpp"

#include <algorithm>
#include <cmath>

#include "akvsr/errors.hpp"

namespace akvsr {

std::vector<int> Vocab::encode(std::span<const int> phonemeSeq, bool withEos) const {
  std::vector<int> out;
  out.reserve(phonemeSeq.size() + 1);
  for (int p : phonemeSeq) {
    if (p < 0 || p >= phonemes) throw RangeError("phoneme " + std::to_string(p) + " outside vocabulary");
    out.push_back(token(p));
  }
  if (withEos) out.push_back(eos());
  return out;
}

Tensor sinusoidal_positions(std::size_t T, std::size_t d) {
  Tensor pe({T, d});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe(t, i) = (i % 2 == 0) ? std::sin(static_cast<double>(t) * rate) : std::cos(static_cast<double>(t) * rate);
    }
  return pe;
}

MultiHeadAttention MultiHeadAttention::make(std::size_t d, int heads, Rng& rng) {
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0)
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  MultiHeadAttention m;
  m.q = Linear::make(d, d, rng);
  m.k = Linear::make(d, d, rng);
  m.v = Linear::make(d, d, rng);
  m.o = Linear::make(d, d, rng);
  m.heads = heads;
  return m;
}

Var MultiHeadAttention::operator()(const Var& query, const Var& memory, bool causal) const {
  const Var Q = q(query), K = k(memory), Vv = v(memory);
  const std::size_t d = Q.cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double temperature = std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::size_t b = static_cast<std::size_t>(h) * dh, e = b + dh;
    const Var qh = heads == 1 ? Q : slice_cols(Q, b, e);
    const Var kh = heads == 1 ? K : slice_cols(K, b, e);
    const Var vh = heads == 1 ? Vv : slice_cols(Vv, b, e);
    Var s = matmul_nt(qh, kh);
    if (causal) s = causal_mask(s);
    outs.push_back(matmul(softmax_rows(s, temperature), vh));
  }
  return o(concat_cols(outs));
}

void MultiHeadAttention::collect(ParamSet& ps, const std::string& prefix) const {
  q.collect(ps, prefix + ".wq");
  k.collect(ps, prefix + ".wk");
  v.collect(ps, prefix + ".wv");
  o.collect(ps, prefix + ".wo");
}

FeedForward FeedForward::make(std::size_t d, std::size_t ff, Rng& rng) {
  return {Linear::make(d, ff, rng), Linear::make(ff, d, rng)};
}

void FeedForward::collect(ParamSet& ps, const std::string& prefix) const {
  up.collect(ps, prefix + ".up");
  down.collect(ps, prefix + ".down");
}

EncoderStack EncoderStack::make(const StackConfig& config, Rng& rng) {
  if (config.layers < 0) throw ConfigError("encoder layers must be >= 0");
  EncoderStack s;
  s.config = config;
  const auto d = static_cast<std::size_t>(config.d);
  for (int l = 0; l < config.layers; ++l) {
    EncoderBlock b{LayerNormParams::make(d), LayerNormParams::make(d), MultiHeadAttention::make(d, config.heads, rng),
                   FeedForward::make(d, static_cast<std::size_t>(config.ff), rng)};
    s.layers.push_back(std::move(b));
  }
  s.final_ln = LayerNormParams::make(d);
  return s;
}

void EncoderStack::collect(ParamSet& ps, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    layers[l].ln1.collect(ps, p + ".ln1");
    layers[l].attn.collect(ps, p + ".attn");
    layers[l].ln2.collect(ps, p + ".ln2");
    layers[l].ff.collect(ps, p + ".ff");
  }
  if (!layers.empty()) final_ln.collect(ps, prefix + ".ln");
}

Var encode(const EncoderStack& stack, const Var& x) {
  if (x.value().rank() != 2 || x.cols() != static_cast<std::size_t>(stack.config.d))
    throw DimensionError("encode: input " + shape_str(x.shape()) + " does not match model width " +
                         std::to_string(stack.config.d));
  if (stack.layers.empty()) return x;
  Var h = stack.positional ? add(x, Var::constant(sinusoidal_positions(x.rows(), x.cols()))) : x;
  for (const auto& b : stack.layers) {
    const Var n1 = b.ln1(h);
    h = add(h, b.attn(n1, n1, false));
    h = add(h, b.ff(b.ln2(h)));
  }
  return stack.final_ln(h);
}

DecoderStack DecoderStack::make(const StackConfig& config, const Vocab& vocab, Rng& rng) {
  DecoderStack s;
  s.config = config;
  s.vocab = vocab;
  const auto d = static_cast<std::size_t>(config.d);
  const auto v = static_cast<std::size_t>(vocab.size());
  s.tokenEmbedding = param_uniform(v, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  for (int l = 0; l < config.layers; ++l) {
    DecoderBlock b{LayerNormParams::make(d),
                   LayerNormParams::make(d),
                   LayerNormParams::make(d),
                   MultiHeadAttention::make(d, config.heads, rng),
                   MultiHeadAttention::make(d, config.heads, rng),
                   FeedForward::make(d, static_cast<std::size_t>(config.ff), rng)};
    s.layers.push_back(std::move(b));
  }
  s.final_ln = LayerNormParams::make(d);
  s.outputProjection = Linear::make(d, v, rng);
  return s;
}

void DecoderStack::collect(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".embed", tokenEmbedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    layers[l].ln1.collect(ps, p + ".ln1");
    layers[l].self_attn.collect(ps, p + ".self_attn");
    layers[l].ln2.collect(ps, p + ".ln2");
    layers[l].cross_attn.collect(ps, p + ".cross_attn");
    layers[l].ln3.collect(ps, p + ".ln3");
    layers[l].ff.collect(ps, p + ".ff");
  }
  final_ln.collect(ps, prefix + ".ln");
  outputProjection.collect(ps, prefix + ".out");
}

Var decoder_logits(const DecoderStack& dec, std::span<const int> tokens, const Var& enc) {
  if (tokens.empty()) throw ContractError("decoder needs a non-empty token prefix");
  if (enc.cols() != static_cast<std::size_t>(dec.config.d))
    throw DimensionError("decoder: encoder output " + shape_str(enc.shape()) + " does not match model width " +
                         std::to_string(dec.config.d));
  std::vector<std::size_t> idx;
  idx.reserve(tokens.size());
  for (int t : tokens) {
    if (t < 0 || t >= dec.vocab.size()) throw RangeError("token " + std::to_string(t) + " outside vocabulary");
    idx.push_back(static_cast<std::size_t>(t));
  }
  Var h = add(gather_rows(dec.tokenEmbedding, idx),
              Var::constant(sinusoidal_positions(tokens.size(), static_cast<std::size_t>(dec.config.d))));
  for (const auto& b : dec.layers) {
    const Var n1 = b.ln1(h);
    h = add(h, b.self_attn(n1, n1, true));
    h = add(h, b.cross_attn(b.ln2(h), enc, false));
    h = add(h, b.ff(b.ln3(h)));
  }
  return dec.outputProjection(dec.final_ln(h));
}

Tensor decode_step(const DecoderStack& dec, std::span<const int> prefix, const Var& enc) {
  if (prefix.empty()) throw ContractError("decode_step: empty prefix");
  if (prefix.front() != dec.vocab.bos()) throw ContractError("decode_step: prefix must start with BOS");
  NoGradGuard guard;
  const Var logits = decoder_logits(dec, prefix, enc);
  auto last = logits.value().row(logits.rows() - 1);
  return Tensor::vector(last);
}

std::vector<int> greedy_decode(const DecoderStack& dec, const Var& enc, int maxLen) {
  if (maxLen < 1) throw ContractError("greedy_decode: maxLen must be >= 1");
  std::vector<int> prefix = {dec.vocab.bos()};
  std::vector<int> out;
  for (int step = 0; step < maxLen; ++step) {
    const Tensor logits = decode_step(dec, prefix, enc);
    // Candidates: phoneme tokens and EOS; first maximum wins.
    int best = dec.vocab.eos();
    double best_v = logits[static_cast<std::size_t>(best)];
    for (int t = 1; t <= dec.vocab.phonemes; ++t)
      if (logits[static_cast<std::size_t>(t)] > best_v ||
          (logits[static_cast<std::size_t>(t)] == best_v && t < best)) {
        best = t;
        best_v = logits[static_cast<std::size_t>(t)];
      }
    if (best == dec.vocab.eos()) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

}  // namespace akvsr
