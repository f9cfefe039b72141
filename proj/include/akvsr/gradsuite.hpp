// akvsr/gradsuite.hpp
//
// The library-wide finite-difference suite behind the `gradcheck` command:
// every differentiable op, every module, and the stage-2 graph end to end.
#pragma once

#include <string>
#include <vector>

namespace akvsr {

struct GradSuiteEntry {
  std::string name;
  double tolerance = 1e-4;
  int trials = 0;
  double maxRelError = 0.0;
  bool pass = true;
  std::string failure;  // first failing trial, empty on pass
};

std::vector<std::string> gradcheck_suite_names();

// `mutate` names one entry whose output gradient is sign-flipped; the suite
// must then report that entry as failing. Empty runs the honest suite.
std::vector<GradSuiteEntry> run_gradcheck_suite(int trials, const std::string& mutate = "");

}  // namespace akvsr
