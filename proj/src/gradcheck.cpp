// src/gradcheck.cpp

#include "akvsr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace akvsr {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

GradCheckReport grad_check(const std::function<Var()>& f, const std::vector<NamedVar>& params, double h,
                           double tol) {
  GradCheckReport report;
  report.pass = true;

  std::vector<Tensor> analytic;
  {
    Var root = f();
    GradMap grads = backward(root);
    for (const auto& p : params)
      analytic.push_back(grads.contains(p.var) ? grads.at(p.var) : Tensor(p.var.shape(), 0.0));
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    Var v = params[k].var;
    ParamCheck pc;
    pc.name = params[k].name;
    Tensor& x = v.mutable_value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = f().item();
      x[i] = orig - h;
      const double fm = f().item();
      x[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[k][i];
      if (!std::isfinite(num) || !std::isfinite(ana)) {
        pc.nan = true;
        pc.worst_index = i;
        pc.analytic = ana;
        pc.numeric = num;
        pc.max_rel_error = std::numeric_limits<double>::infinity();
        break;
      }
      const double err = relative_error(ana, num);
      if (i == 0 || err > pc.max_rel_error) {
        pc.max_rel_error = err;
        pc.worst_index = i;
        pc.analytic = ana;
        pc.numeric = num;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    if ((pc.nan || !(pc.max_rel_error <= tol)) && report.pass) {
      report.pass = false;
      std::ostringstream os;
      os << pc.name << "[" << pc.worst_index << "]: analytic " << pc.analytic << " numeric " << pc.numeric
         << (pc.nan ? " (non-finite)" : "");
      report.failure = os.str();
    }
    report.params.push_back(std::move(pc));
  }
  return report;
}

}  // namespace akvsr
