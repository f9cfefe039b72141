// src/abm.cpp

#include "akvsr/abm.hpp"

#include <cmath>

#include "akvsr/errors.hpp"

namespace akvsr {

void AbmConfig::validate() const {
  if (d < 1) throw ConfigError("abm.d must be >= 1");
  if (heads < 1) throw ConfigError("abm.heads must be >= 1");
  if (dk < 1 || dk % heads != 0) throw ConfigError("abm.dk must be a positive multiple of abm.heads");
  if (dv < 1 || dv % heads != 0) throw ConfigError("abm.dv must be a positive multiple of abm.heads");
  if (!std::isfinite(tau)) throw ConfigError("abm.tau must be finite");
}

double AbmConfig::resolved_tau() const {
  return tau > 0.0 ? tau : std::sqrt(static_cast<double>(dk) / static_cast<double>(heads));
}

AbmLayer AbmLayer::make(const AbmConfig& config, Rng& rng) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d);
  const auto dk = static_cast<std::size_t>(config.dk);
  const auto dv = static_cast<std::size_t>(config.dv);
  AbmLayer l;
  l.wq = param_xavier(d, dk, rng);
  l.wk = param_xavier(d, dk, rng);
  l.wv = param_xavier(d, dv, rng);
  l.wo = param_xavier(dv, d, rng);
  l.ln = LayerNormParams::make(d);
  l.heads = config.heads;
  l.tau = config.resolved_tau();
  return l;
}

void AbmLayer::collect(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".wq", wq);
  ps.add(prefix + ".wk", wk);
  ps.add(prefix + ".wv", wv);
  ps.add(prefix + ".wo", wo);
  ln.collect(ps, prefix + ".ln");
}

namespace {

void check_dims(const AbmLayer& layer, const Var& fv, const CompactAudioMemory& memory) {
  const std::size_t d = layer.wq.rows();
  if (fv.value().rank() != 2 || fv.cols() != d)
    throw DimensionError("abm: visual features " + shape_str(fv.shape()) + " do not match width " +
                         std::to_string(d));
  if (memory.dim() != layer.wk.rows())
    throw DimensionError("abm: memory " + shape_str(memory.slots.shape()) + " does not match width " +
                         std::to_string(layer.wk.rows()));
}

Var head_slice(const Var& x, int heads, int h) {
  if (heads == 1) return x;
  const std::size_t w = x.cols() / static_cast<std::size_t>(heads);
  return slice_cols(x, static_cast<std::size_t>(h) * w, static_cast<std::size_t>(h + 1) * w);
}

}  // namespace

std::vector<Var> attention_scores(const AbmLayer& layer, const Var& fv, const CompactAudioMemory& memory) {
  check_dims(layer, fv, memory);
  const Var Q = matmul(fv, layer.wq);
  const Var K = matmul(memory.slots, layer.wk);
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(layer.heads));
  for (int h = 0; h < layer.heads; ++h)
    out.push_back(softmax_rows(matmul_nt(head_slice(Q, layer.heads, h), head_slice(K, layer.heads, h)), layer.tau));
  return out;
}

Var reconstruct(const AbmLayer& layer, std::span<const Var> scores, const CompactAudioMemory& memory) {
  if (scores.size() != static_cast<std::size_t>(layer.heads))
    throw DimensionError("abm: expected " + std::to_string(layer.heads) + " score matrices, got " +
                         std::to_string(scores.size()));
  const Var Vm = matmul(memory.slots, layer.wv);
  std::vector<Var> parts;
  parts.reserve(scores.size());
  for (int h = 0; h < layer.heads; ++h) {
    const Var& A = scores[static_cast<std::size_t>(h)];
    if (A.cols() != memory.size())
      throw DimensionError("abm: scores " + shape_str(A.shape()) + " do not cover " + std::to_string(memory.size()) +
                           " slots");
    parts.push_back(matmul(A, head_slice(Vm, layer.heads, h)));
  }
  return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

Var inject(const AbmLayer& layer, const Var& fv, const Var& reconstructed) {
  return layer.ln(add(fv, matmul(reconstructed, layer.wo)));
}

AbmStack AbmStack::make(const AbmConfig& config, int depth, Rng& rng) {
  config.validate();
  if (depth < 0) throw ConfigError("abm depth must be >= 0");
  AbmStack s;
  s.config = config;
  for (int k = 0; k < depth; ++k) s.layers.push_back(AbmLayer::make(config, rng));
  return s;
}

void AbmStack::collect(ParamSet& ps, const std::string& prefix) const {
  for (std::size_t k = 0; k < layers.size(); ++k) layers[k].collect(ps, prefix + ".layer" + std::to_string(k));
}

Var abm_forward(const AbmStack& stack, const Var& fv, const CompactAudioMemory& memory) {
  Var f = fv;
  for (const auto& layer : stack.layers) {
    const auto scores = attention_scores(layer, f, memory);
    f = inject(layer, f, reconstruct(layer, scores, memory));
  }
  return f;
}

}  // namespace akvsr
