// akvsr/evalkit.hpp
//
// Token error rate and the ablation sweep driver.

#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace akvsr {

struct WerReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t referenceLength = 0;
  double wer = 0.0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

// Unit-cost Levenshtein. Among equal-cost alignments the backtrace prefers
// substitution, then insertion, then deletion.
WerReport wer(std::span<const int> hyp, std::span<const int> ref);

// Corpus-level rate: summed edits over summed reference length.
struct WerAccumulator {
  WerReport total;
  void add(const WerReport& r);
  double rate() const;
};

enum class AblationAxis { Clusters, AbmDepth, MemoryDim };

AblationAxis parse_axis(const std::string& name);
std::string axis_name(AblationAxis axis);

struct AblationRow {
  double axisValue = 0.0;
  std::uint64_t seed = 0;
  double wer = 0.0;
  double asrWer = -1.0;  // negative when stage 1 did not run
  double purity = -1.0;
  double speakerNmi = -1.0;
};

struct AblationSummary {
  double axisValue = 0.0;
  double meanWer = 0.0;
  double stdWer = 0.0;
  std::size_t runs = 0;
};

struct AblationResult {
  AblationAxis axis = AblationAxis::AbmDepth;
  std::vector<double> values;
  std::vector<AblationRow> rows;

  std::vector<AblationSummary> summarize() const;
  void write_csv(std::ostream& out) const;
};

// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
void mean_std(std::span<const double> xs, double& mean, double& std);

}  // namespace akvsr
