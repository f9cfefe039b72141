// src/quantizer.cpp

#include "akvsr/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "akvsr/errors.hpp"
#include "akvsr/rng.hpp"

namespace akvsr {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Returns the inertia of the assignment.
double assign(const Tensor& x, const Tensor& centroids, std::vector<std::size_t>& labels,
              std::vector<double>& dist) {
  const std::size_t M = x.rows(), N = centroids.rows();
  double inertia = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < N; ++c) {
      const double d = sq_dist(x.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
    dist[i] = best;
    inertia += best;
  }
  return inertia;
}

Tensor kmeanspp_seed(const Tensor& x, std::size_t N, Rng& rng) {
  const std::size_t M = x.rows(), d = x.cols();
  Tensor c({N, d});
  std::uniform_int_distribution<std::size_t> pick(0, M - 1);
  auto copy_row = [&](std::size_t dst, std::size_t src) {
    auto s = x.row(src);
    std::copy(s.begin(), s.end(), c.row(dst).begin());
  };
  copy_row(0, pick(rng));
  std::vector<double> best(M);
  for (std::size_t i = 0; i < M; ++i) best[i] = sq_dist(x.row(i), c.row(0));
  for (std::size_t k = 1; k < N; ++k) {
    double total = 0.0;
    for (double v : best) total += v;
    std::size_t next = 0;
    if (total <= 0.0) {
      next = pick(rng);
    } else {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double cum = 0.0;
      next = M - 1;
      for (std::size_t i = 0; i < M; ++i) {
        cum += best[i];
        if (r < cum) {
          next = i;
          break;
        }
      }
    }
    copy_row(k, next);
    for (std::size_t i = 0; i < M; ++i) best[i] = std::min(best[i], sq_dist(x.row(i), c.row(k)));
  }
  return c;
}

}  // namespace

ClusterModel fit_kmeans(const Tensor& features, int N, int maxIter, std::uint64_t seed) {
  if (features.rank() != 2) throw DimensionError("fit_kmeans: features must be [M x d]");
  if (N < 1) throw ConfigError("fit_kmeans: N must be >= 1");
  if (maxIter < 1) throw ConfigError("fit_kmeans: maxIter must be >= 1");
  const std::size_t M = features.rows(), d = features.cols();
  const auto K = static_cast<std::size_t>(N);
  if (M < K) throw DataError("fit_kmeans: " + std::to_string(M) + " points cannot fill " + std::to_string(N) + " clusters");

  Rng rng(mix_seed({seed, 0xc1u}));
  ClusterModel model;
  model.centroids = kmeanspp_seed(features, K, rng);

  std::vector<std::size_t> labels(M), prev;
  std::vector<double> dist(M);
  std::vector<std::size_t> count(K);
  for (int it = 0; it < maxIter; ++it) {
    const double inertia = assign(features, model.centroids, labels, dist);
    model.inertiaHistory.push_back(inertia);
    model.inertia = inertia;
    model.iterations = it + 1;

    std::fill(count.begin(), count.end(), 0);
    for (auto l : labels) ++count[l];
    for (std::size_t c = 0; c < K; ++c) {
      if (count[c] != 0) continue;
      // Seize the worst-fit point from a cluster that can spare it.
      std::size_t far = M;
      for (std::size_t i = 0; i < M; ++i)
        if (count[labels[i]] > 1 && (far == M || dist[i] > dist[far])) far = i;
      --count[labels[far]];
      labels[far] = c;
      dist[far] = 0.0;
      count[c] = 1;
      auto src = features.row(far);
      std::copy(src.begin(), src.end(), model.centroids.row(c).begin());
    }

    if (labels == prev) break;
    prev = labels;

    Tensor next({K, d}, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
      auto dst = next.row(labels[i]);
      auto src = features.row(i);
      for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
    for (std::size_t c = 0; c < K; ++c)
      for (auto& v : next.row(c)) v /= static_cast<double>(count[c]);
    model.centroids = std::move(next);
  }
  return model;
}

ClusterLabelSeq quantize(const ClusterModel& model, const FeatureSequence& frames) {
  if (frames.cols() != model.dim())
    throw DimensionError("quantize: frame dim " + std::to_string(frames.cols()) + " vs centroid dim " +
                         std::to_string(model.dim()));
  ClusterLabelSeq labels(frames.rows());
  std::vector<double> dist(frames.rows());
  assign(frames, model.centroids, labels, dist);
  return labels;
}

Tensor stack_audio(std::span<const SyntheticSample> split) {
  if (split.empty()) throw DataError("stack_audio: empty split");
  std::size_t rows = 0;
  const std::size_t d = split[0].audio.cols();
  for (const auto& s : split) rows += s.audio.rows();
  Tensor out({rows, d});
  std::size_t r = 0;
  for (const auto& s : split)
    for (std::size_t t = 0; t < s.audio.rows(); ++t, ++r) {
      auto src = s.audio.row(t);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
  return out;
}

double normalized_mutual_information(std::span<const std::size_t> x, std::span<const int> y) {
  const double n = static_cast<double>(x.size());
  std::map<std::size_t, double> px;
  std::map<int, double> py;
  std::map<std::pair<std::size_t, int>, double> pxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    px[x[i]] += 1.0;
    py[y[i]] += 1.0;
    pxy[{x[i], y[i]}] += 1.0;
  }
  auto entropy = [n](const auto& m) {
    double h = 0.0;
    for (const auto& [k, c] : m) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double hx = entropy(px), hy = entropy(py);
  if (hx <= 0.0 || hy <= 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [k, c] : pxy) {
    const double pj = c / n;
    mi += pj * std::log(pj / ((px[k.first] / n) * (py[k.second] / n)));
  }
  return std::clamp(2.0 * mi / (hx + hy), 0.0, 1.0);
}

DisentanglementReport purity_and_leakage(std::span<const std::size_t> labels, std::span<const int> phonemes,
                                         std::span<const int> speakers) {
  if (labels.empty()) throw DataError("purity_and_leakage: empty split");
  if (labels.size() != phonemes.size() || labels.size() != speakers.size())
    throw DimensionError("purity_and_leakage: column lengths disagree");
  std::map<std::size_t, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[labels[i]][phonemes[i]];
  std::size_t majority = 0;
  for (const auto& [c, row] : table) {
    std::size_t best = 0;
    for (const auto& [p, k] : row) best = std::max(best, k);
    majority += best;
  }
  DisentanglementReport r;
  r.frames = labels.size();
  r.phonemePurity = static_cast<double>(majority) / static_cast<double>(labels.size());
  r.speakerNMI = normalized_mutual_information(labels, speakers);
  return r;
}

DisentanglementReport purity_and_leakage(const ClusterModel& model, std::span<const SyntheticSample> split) {
  if (split.empty()) throw DataError("purity_and_leakage: empty split");
  std::vector<std::size_t> labels;
  std::vector<int> phonemes, speakers;
  for (const auto& s : split) {
    auto l = quantize(model, s.audio);
    labels.insert(labels.end(), l.begin(), l.end());
    phonemes.insert(phonemes.end(), s.align.begin(), s.align.end());
    speakers.insert(speakers.end(), l.size(), s.utterance.speakerId);
  }
  return purity_and_leakage(labels, phonemes, speakers);
}

}  // namespace akvsr
