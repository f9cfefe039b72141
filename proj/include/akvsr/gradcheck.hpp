// akvsr/gradcheck.hpp
//
// Central finite-difference verification of analytic gradients.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "akvsr/autograd.hpp"

namespace akvsr {

struct NamedVar {
  std::string name;
  Var var;
};

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool nan = false;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool pass = false;
  std::string failure;  // first failing location, empty on pass
};

// |a - n| / max(1, |a|, |n|)
double relative_error(double analytic, double numeric);

// `f` rebuilds the scalar graph from the current leaf values each call.
// Each entry of `params` is perturbed in place by +-h and restored.
GradCheckReport grad_check(const std::function<Var()>& f, const std::vector<NamedVar>& params, double h = 1e-5,
                           double tol = 1e-4);

}  // namespace akvsr
