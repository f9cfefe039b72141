// src/evalkit.cpp

#include "akvsr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "akvsr/errors.hpp"

namespace akvsr {

WerReport wer(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) throw ContractError("wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  // D[i][j]: cost of aligning ref[0..i) with hyp[0..j).
  std::vector<std::size_t> D((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return D[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u), at(i, j - 1) + 1, at(i - 1, j) + 1});

  WerReport r;
  r.referenceLength = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u)) {
      if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++r.insertions;
      --j;
    } else {
      ++r.deletions;
      --i;
    }
  }
  r.wer = static_cast<double>(r.errors()) / static_cast<double>(n);
  return r;
}

void WerAccumulator::add(const WerReport& r) {
  total.substitutions += r.substitutions;
  total.insertions += r.insertions;
  total.deletions += r.deletions;
  total.referenceLength += r.referenceLength;
  total.wer = rate();
}

double WerAccumulator::rate() const {
  return total.referenceLength == 0 ? 0.0
                                    : static_cast<double>(total.errors()) / static_cast<double>(total.referenceLength);
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "clusters") return AblationAxis::Clusters;
  if (name == "abmDepth") return AblationAxis::AbmDepth;
  if (name == "memoryDim") return AblationAxis::MemoryDim;
  throw ConfigError("ablation axis must be clusters, abmDepth or memoryDim, got '" + name + "'");
}

std::string axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::Clusters: return "clusters";
    case AblationAxis::AbmDepth: return "abmDepth";
    case AblationAxis::MemoryDim: return "memoryDim";
  }
  return "?";
}

void mean_std(std::span<const double> xs, double& mean, double& std) {
  mean = 0.0;
  std = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::vector<AblationSummary> AblationResult::summarize() const {
  std::vector<AblationSummary> out;
  for (double v : values) {
    std::vector<double> w;
    for (const auto& r : rows)
      if (r.axisValue == v) w.push_back(r.wer);
    AblationSummary s;
    s.axisValue = v;
    s.runs = w.size();
    mean_std(w, s.meanWer, s.stdWer);
    out.push_back(s);
  }
  return out;
}

void AblationResult::write_csv(std::ostream& out) const {
  auto opt = [&](double x) {
    if (x >= 0.0) out << x;
  };
  out << "axis_value,seed,wer,asr_wer,purity,speaker_nmi\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.axisValue << ',' << r.seed << ',' << r.wer << ',';
    opt(r.asrWer);
    out << ',';
    opt(r.purity);
    out << ',';
    opt(r.speakerNmi);
    out << '\n';
  }
}

}  // namespace akvsr
