// src/memory.cpp

#include "akvsr/memory.hpp"

#include "akvsr/errors.hpp"
#include "akvsr/rng.hpp"

namespace akvsr {

CompactAudioMemory init_memory(int N, int d, std::uint64_t seed) {
  if (N < 2) throw ConfigError("memory needs N >= 2 slots, got " + std::to_string(N));
  if (d < 8) throw ConfigError("memory needs d >= 8, got " + std::to_string(d));
  Rng rng(mix_seed({seed, 0x3e3}));
  std::normal_distribution<double> normal(0.0, 0.02);
  Tensor t({static_cast<std::size_t>(N), static_cast<std::size_t>(d)});
  for (auto& v : t.data()) v = normal(rng);
  return {Var::leaf(std::move(t), true), false};
}

CompactAudioMemory freeze(const CompactAudioMemory& memory) {
  return {Var::leaf(memory.slots.value(), false), true};
}

CompactAudioMemory zero_memory(int N, int d) {
  return {Var::leaf(Tensor({static_cast<std::size_t>(N), static_cast<std::size_t>(d)}, 0.0), false), true};
}

Var lookup(const CompactAudioMemory& memory, const ClusterLabelSeq& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= memory.size())
      throw IndexError("memory lookup: frame " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                       " but the memory holds " + std::to_string(memory.size()) + " slots");
  return gather_rows(memory.slots, labels);
}

}  // namespace akvsr
