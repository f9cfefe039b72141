// akvsr/nn.hpp
//
// Parameter bookkeeping and the small layers the models share.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "akvsr/autograd.hpp"
#include "akvsr/gradcheck.hpp"
#include "akvsr/rng.hpp"

namespace akvsr {

// Insertion-ordered, uniquely named set of parameter leaves.
class ParamSet {
 public:
  void add(const std::string& name, const Var& v);
  void append(const ParamSet& other);
  const std::vector<NamedVar>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool contains(const std::string& name) const;
  const Var& get(const std::string& name) const;
  std::size_t scalar_count() const;

  std::map<std::string, Tensor> snapshot() const;
  // Copies values in by name; every parameter must be present with a
  // matching shape.
  void load(const std::map<std::string, Tensor>& tensors);

 private:
  std::vector<NamedVar> items_;
};

Var param_uniform(std::size_t rows, std::size_t cols, double limit, Rng& rng);
// Glorot-uniform weight matrix.
Var param_xavier(std::size_t in, std::size_t out, Rng& rng);
Var param_const(Shape shape, double value);

struct Linear {
  Var w;  // [in x out]
  Var b;  // [out], empty when built without bias

  static Linear make(std::size_t in, std::size_t out, Rng& rng, bool bias = true);
  Var operator()(const Var& x) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

struct LayerNormParams {
  Var gamma;
  Var beta;
  double eps = 1e-5;

  static LayerNormParams make(std::size_t d);
  Var operator()(const Var& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(ParamSet& ps, const std::string& prefix) const;
};

}  // namespace akvsr
