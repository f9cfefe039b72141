// akvsr/synth.hpp
//
// Synthetic paired audio/visual feature corpus. Audio frames carry the
// phoneme identity plus a per-speaker offset and noise; visual frames carry
// only the viseme, so phonemes sharing a viseme are visually ambiguous and
// must be resolved from context.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "akvsr/tensor.hpp"

namespace akvsr {

using FeatureSequence = Tensor;  // [T x dim]

struct CorpusConfig {
  int P = 12;
  int V = 6;
  int S = 4;
  double sigmaAudio = 0.1;
  double sigmaVisual = 0.3;
  double speakerScale = 0.5;
  int durMin = 2;
  int durMax = 5;
  int d_a = 32;
  int d = 32;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

struct PhonemeInventory {
  std::vector<std::string> phonemes;
  std::vector<int> visemeOf;  // phoneme -> viseme
  int numVisemes = 0;
  Tensor audioEmbedding;   // [P x d_a], orthonormal rows
  Tensor visualEmbedding;  // [V x d], orthonormal rows

  int size() const { return static_cast<int>(phonemes.size()); }
  std::vector<int> members(int viseme) const;
  // Position of a phoneme among the members of its viseme class.
  int rank_in_class(int phoneme) const;
  int symbol_index(const std::string& symbol) const;
};

// Deterministic balanced assignment: a seeded permutation of the phonemes
// dealt round-robin onto the visemes. Needs 1 <= V < P <= 26, P <= d_a, V <= d.
PhonemeInventory make_inventory(int P, int V, std::uint64_t seed, int d_a = 32, int d = 32);

// Bigram grammar whose successor sets separate every pair of phonemes that
// share a viseme. When class sizes allow it the separation is at viseme
// level, so the next visual frame already tells the pair apart.
struct Grammar {
  std::vector<std::vector<int>> successors;

  static Grammar builtin(const PhonemeInventory& inv);
  bool allows(int from, int to) const;
};

struct Utterance {
  std::vector<int> transcript;  // phoneme indices
  int speakerId = 0;
  std::uint64_t rngSeed = 0;
};

struct SyntheticSample {
  std::string id;
  FeatureSequence audio;   // [T_a x d_a]
  FeatureSequence visual;  // [T_v x d], T_a == 2 T_v
  Utterance utterance;
  std::vector<int> align;  // phoneme per audio frame; metrics only
};

Utterance sample_utterance(const PhonemeInventory& inv, const Grammar& grammar, int speakerId, std::uint64_t seed,
                           int numSpeakers);

// [S x d_a] offsets of norm speakerScale, a function of config.seed only.
Tensor speaker_offsets(const CorpusConfig& config);

SyntheticSample render(const Utterance& utt, const PhonemeInventory& inv, const CorpusConfig& config);

struct Corpus {
  CorpusConfig config;
  PhonemeInventory inventory;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
  std::vector<SyntheticSample> quantfit;  // speaker 0 only
};

Corpus generate_corpus(const CorpusConfig& config, int nTrain, int nTest, int singleSpeakerN);

// One JSON object per line; see README for the schema.
void write_split(const std::filesystem::path& path, const std::vector<SyntheticSample>& split,
                 const PhonemeInventory& inv);
std::vector<SyntheticSample> read_split(const std::filesystem::path& path, const PhonemeInventory& inv);

// Writes train.jsonl, test.jsonl, quantfit.jsonl and corpus.json into dir.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace akvsr
