// akvsr/memory.hpp
//
// Compact audio memory: one trainable d-dimensional slot per quantizer
// cluster, read frame-wise by cluster label.

#pragma once

#include <cstdint>

#include "akvsr/autograd.hpp"
#include "akvsr/quantizer.hpp"

namespace akvsr {

struct CompactAudioMemory {
  Var slots;  // [N x d]
  bool frozen = false;

  std::size_t size() const { return slots.rows(); }
  std::size_t dim() const { return slots.cols(); }
};

// slots ~ N(0, 0.02^2), deterministic per seed.
CompactAudioMemory init_memory(int N, int d, std::uint64_t seed);

// Wraps a copy of the slot values in a leaf that never receives gradients.
CompactAudioMemory freeze(const CompactAudioMemory& memory);

// All-zero slots of the given extent; the control memory for ablations.
CompactAudioMemory zero_memory(int N, int d);

// Row i of the result is slots[labels[i]].
Var lookup(const CompactAudioMemory& memory, const ClusterLabelSeq& labels);

}  // namespace akvsr
