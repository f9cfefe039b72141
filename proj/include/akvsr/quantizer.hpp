// akvsr/quantizer.hpp
//
// k-means over audio frames and the frame-wise quantizer built from it.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "akvsr/synth.hpp"
#include "akvsr/tensor.hpp"

namespace akvsr {

using ClusterLabelSeq = std::vector<std::size_t>;

struct ClusterModel {
  Tensor centroids;  // [N x d_a]
  int iterations = 0;
  double inertia = 0.0;
  std::vector<double> inertiaHistory;  // one entry per assignment pass

  std::size_t clusters() const { return centroids.rows(); }
  std::size_t dim() const { return centroids.cols(); }
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or maxIter passes. A cluster left empty takes over the point that
// lies farthest from its own centroid.
ClusterModel fit_kmeans(const Tensor& features, int N, int maxIter, std::uint64_t seed);

// Nearest centroid per frame; ties go to the lowest index.
ClusterLabelSeq quantize(const ClusterModel& model, const FeatureSequence& frames);

// All audio frames of a split, row-concatenated.
Tensor stack_audio(std::span<const SyntheticSample> split);

struct DisentanglementReport {
  double phonemePurity = 0.0;
  double speakerNMI = 0.0;
  std::size_t frames = 0;
};

DisentanglementReport purity_and_leakage(const ClusterModel& model, std::span<const SyntheticSample> split);

// Same statistics from explicit per-frame label/phoneme/speaker columns.
DisentanglementReport purity_and_leakage(std::span<const std::size_t> labels, std::span<const int> phonemes,
                                         std::span<const int> speakers);

// 2 I(X;Y) / (H(X) + H(Y)); zero when either side carries no entropy.
double normalized_mutual_information(std::span<const std::size_t> x, std::span<const int> y);

}  // namespace akvsr
