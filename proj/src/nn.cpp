// src/nn.cpp

#include "akvsr/nn.hpp"

#include <cmath>

#include "akvsr/errors.hpp"

namespace akvsr {

void ParamSet::add(const std::string& name, const Var& v) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  items_.push_back({name, v});
}

void ParamSet::append(const ParamSet& other) {
  for (const auto& p : other.items_) add(p.name, p.var);
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return true;
  return false;
}

const Var& ParamSet::get(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return p.var;
  throw ContractError("unknown parameter " + name);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.value().size();
  return n;
}

std::map<std::string, Tensor> ParamSet::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : items_) out.emplace(p.name, p.var.value());
  return out;
}

void ParamSet::load(const std::map<std::string, Tensor>& tensors) {
  for (auto& p : items_) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw DataError("checkpoint lacks tensor " + p.name);
    if (it->second.shape() != p.var.shape())
      throw DimensionError("tensor " + p.name + ": checkpoint shape " + shape_str(it->second.shape()) +
                           " vs model shape " + shape_str(p.var.shape()));
    p.var.mutable_value() = it->second;
  }
}

Var param_uniform(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = u(rng);
  return Var::leaf(std::move(t), true);
}

Var param_xavier(std::size_t in, std::size_t out, Rng& rng) {
  return param_uniform(in, out, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
}

Var param_const(Shape shape, double value) { return Var::leaf(Tensor(std::move(shape), value), true); }

Linear Linear::make(std::size_t in, std::size_t out, Rng& rng, bool bias) {
  Linear l;
  l.w = param_xavier(in, out, rng);
  if (bias) l.b = param_const({out}, 0.0);
  return l;
}

Var Linear::operator()(const Var& x) const {
  Var y = matmul(x, w);
  return b ? add_row(y, b) : y;
}

void Linear::collect(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".w", w);
  if (b) ps.add(prefix + ".b", b);
}

LayerNormParams LayerNormParams::make(std::size_t d) {
  return {param_const({d}, 1.0), param_const({d}, 0.0), 1e-5};
}

void LayerNormParams::collect(ParamSet& ps, const std::string& prefix) const {
  ps.add(prefix + ".gamma", gamma);
  ps.add(prefix + ".beta", beta);
}

}  // namespace akvsr
