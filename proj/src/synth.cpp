// src/synth.cpp

#include "akvsr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "akvsr/errors.hpp"
#include "akvsr/rng.hpp"
#include "akvsr/serialization.hpp"
#include "json.hpp"

namespace akvsr {

namespace {

constexpr int kMinLength = 3;
constexpr int kMaxLength = 12;

// Rows are orthonormal; modified Gram-Schmidt applied twice.
Tensor orthonormal_rows(int count, int dim, Rng& rng) {
  if (count > dim)
    throw ConfigError("cannot place " + std::to_string(count) + " orthogonal vectors in " + std::to_string(dim) +
                      " dimensions");
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t({static_cast<std::size_t>(count), static_cast<std::size_t>(dim)});
  for (int i = 0; i < count; ++i) {
    auto r = t.row(i);
    double norm = 0.0;
    do {
      for (auto& v : r) v = normal(rng);
      for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < i; ++j) {
          auto q = t.row(j);
          double dot = 0.0;
          for (int k = 0; k < dim; ++k) dot += r[k] * q[k];
          for (int k = 0; k < dim; ++k) r[k] -= dot * q[k];
        }
      }
      norm = 0.0;
      for (double v : r) norm += v * v;
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    for (auto& v : r) v /= norm;
  }
  return t;
}

nlohmann::json sample_to_json(const SyntheticSample& s, const PhonemeInventory& inv) {
  nlohmann::json j;
  j["id"] = s.id;
  j["speaker"] = s.utterance.speakerId;
  auto& tr = j["transcript"] = nlohmann::json::array();
  for (int p : s.utterance.transcript) tr.push_back(inv.phonemes.at(p));
  auto frames = [](const Tensor& t) {
    auto arr = nlohmann::json::array();
    for (std::size_t i = 0; i < t.rows(); ++i) {
      auto r = t.row(i);
      arr.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return arr;
  };
  j["audio"] = frames(s.audio);
  j["visual"] = frames(s.visual);
  j["align"] = s.align;
  return j;
}

Tensor frames_from_json(const nlohmann::json& arr, const std::string& what) {
  if (!arr.is_array() || arr.empty()) throw DataError(what + ": expected a non-empty frame list");
  const std::size_t d = arr[0].size();
  std::vector<double> data;
  data.reserve(arr.size() * d);
  for (const auto& row : arr) {
    if (row.size() != d) throw DataError(what + ": ragged frame list");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Tensor({arr.size(), d}, std::move(data));
}

}  // namespace

void CorpusConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("corpus." + field + ": " + why);
  };
  if (V < 1) fail("V", "need at least one viseme");
  if (V >= P) fail("V", "ambiguity requires V < P");
  if (P > 26) fail("P", "at most 26 phonemes");
  if (S < 1) fail("S", "need at least one speaker");
  if (sigmaAudio < 0.0) fail("sigmaAudio", "must be >= 0");
  if (sigmaVisual < sigmaAudio) fail("sigmaVisual", "must be >= sigmaAudio");
  if (speakerScale < 0.0) fail("speakerScale", "must be >= 0");
  if (durMin < 2) fail("durMin", "must be >= 2");
  if (durMax < durMin) fail("durMax", "must be >= durMin");
  if (d_a < 8) fail("d_a", "must be >= 8");
  if (d < 8) fail("d", "must be >= 8");
  if (P > d_a) fail("d_a", "must be >= P for orthogonal phoneme embeddings");
  if (V > d) fail("d", "must be >= V for orthogonal viseme embeddings");
}

std::vector<int> PhonemeInventory::members(int viseme) const {
  std::vector<int> out;
  for (int p = 0; p < size(); ++p)
    if (visemeOf[p] == viseme) out.push_back(p);
  return out;
}

int PhonemeInventory::rank_in_class(int phoneme) const {
  int r = 0;
  for (int p = 0; p < phoneme; ++p)
    if (visemeOf[p] == visemeOf[phoneme]) ++r;
  return r;
}

int PhonemeInventory::symbol_index(const std::string& symbol) const {
  auto it = std::find(phonemes.begin(), phonemes.end(), symbol);
  if (it == phonemes.end()) throw DataError("unknown phoneme symbol '" + symbol + "'");
  return static_cast<int>(it - phonemes.begin());
}

PhonemeInventory make_inventory(int P, int V, std::uint64_t seed, int d_a, int d) {
  if (V >= P) throw ConfigError("ambiguity requires V < P (got V=" + std::to_string(V) + ", P=" + std::to_string(P) + ")");
  if (V < 1 || P > 26) throw ConfigError("inventory needs 1 <= V < P <= 26");
  PhonemeInventory inv;
  inv.numVisemes = V;
  for (int p = 0; p < P; ++p) inv.phonemes.push_back(std::string(1, static_cast<char>('a' + p)));

  Rng rng(mix_seed({seed, 0x1e7e}));
  std::vector<int> perm(P);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  inv.visemeOf.assign(P, 0);
  for (int i = 0; i < P; ++i) inv.visemeOf[perm[i]] = i % V;

  inv.audioEmbedding = orthonormal_rows(P, d_a, rng);
  inv.visualEmbedding = orthonormal_rows(V, d, rng);
  return inv;
}

Grammar Grammar::builtin(const PhonemeInventory& inv) {
  const int P = inv.size();
  const int V = inv.numVisemes;
  Grammar g;
  g.successors.resize(P);
  for (int p = 0; p < P; ++p) {
    const int v = inv.visemeOf[p];
    const int k = static_cast<int>(inv.members(v).size());
    const int r = inv.rank_in_class(p);
    // Members of one class get disjoint successor sets: by viseme when the
    // class fits into the viseme count, by phoneme otherwise.
    std::vector<int> base;
    for (int q = 0; q < P; ++q) {
      const int key = k <= V ? inv.visemeOf[q] : q;
      if ((key + v) % k == r) base.push_back(q);
    }
    // Prefer successors on a different viseme, then any other phoneme. Two
    // adjacent phonemes that share a viseme (or repeat) form one unbroken
    // run of frames, so their boundary is invisible.
    for (int q : base)
      if (inv.visemeOf[q] != v) g.successors[p].push_back(q);
    if (g.successors[p].empty())
      for (int q : base)
        if (q != p) g.successors[p].push_back(q);
    if (g.successors[p].empty()) g.successors[p] = base;
  }
  return g;
}

bool Grammar::allows(int from, int to) const {
  const auto& s = successors.at(from);
  return std::find(s.begin(), s.end(), to) != s.end();
}

Utterance sample_utterance(const PhonemeInventory& inv, const Grammar& grammar, int speakerId, std::uint64_t seed,
                           int numSpeakers) {
  if (speakerId < 0 || speakerId >= numSpeakers)
    throw RangeError("speaker id " + std::to_string(speakerId) + " outside [0, " + std::to_string(numSpeakers) + ")");
  Rng rng(mix_seed({seed, 0x07}));
  Utterance u;
  u.speakerId = speakerId;
  u.rngSeed = seed;
  const int len = std::uniform_int_distribution<int>(kMinLength, kMaxLength)(rng);
  int cur = std::uniform_int_distribution<int>(0, inv.size() - 1)(rng);
  u.transcript.push_back(cur);
  while (static_cast<int>(u.transcript.size()) < len) {
    const auto& next = grammar.successors[cur];
    cur = next[std::uniform_int_distribution<std::size_t>(0, next.size() - 1)(rng)];
    u.transcript.push_back(cur);
  }
  return u;
}

Tensor speaker_offsets(const CorpusConfig& config) {
  Rng rng(mix_seed({config.seed, 0x5eed}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor off({static_cast<std::size_t>(config.S), static_cast<std::size_t>(config.d_a)});
  for (int s = 0; s < config.S; ++s) {
    auto r = off.row(s);
    double n = 0.0;
    for (auto& v : r) {
      v = normal(rng);
      n += v * v;
    }
    n = std::sqrt(n);
    for (auto& v : r) v *= config.speakerScale / n;
  }
  return off;
}

SyntheticSample render(const Utterance& utt, const PhonemeInventory& inv, const CorpusConfig& config) {
  Rng rng(mix_seed({utt.rngSeed, config.seed, 0xa0d1}));
  std::uniform_int_distribution<int> dur(config.durMin, config.durMax);
  std::normal_distribution<double> audio_noise(0.0, 1.0);
  std::normal_distribution<double> visual_noise(0.0, 1.0);

  SyntheticSample s;
  s.utterance = utt;
  for (int p : utt.transcript) {
    const int n = dur(rng);
    s.align.insert(s.align.end(), static_cast<std::size_t>(n), p);
  }
  if (s.align.size() % 2 == 1) s.align.push_back(utt.transcript.back());

  const std::size_t Ta = s.align.size();
  const std::size_t Tv = Ta / 2;
  const std::size_t da = static_cast<std::size_t>(config.d_a);
  const std::size_t dv = static_cast<std::size_t>(config.d);
  const Tensor offsets = speaker_offsets(config);

  s.audio = Tensor({Ta, da});
  for (std::size_t t = 0; t < Ta; ++t) {
    auto e = inv.audioEmbedding.row(static_cast<std::size_t>(s.align[t]));
    auto o = offsets.row(static_cast<std::size_t>(utt.speakerId));
    auto f = s.audio.row(t);
    for (std::size_t k = 0; k < da; ++k) f[k] = e[k] + o[k] + config.sigmaAudio * audio_noise(rng);
  }
  s.visual = Tensor({Tv, dv});
  for (std::size_t j = 0; j < Tv; ++j) {
    const int viseme = inv.visemeOf[static_cast<std::size_t>(s.align[2 * j])];
    auto e = inv.visualEmbedding.row(static_cast<std::size_t>(viseme));
    auto f = s.visual.row(j);
    for (std::size_t k = 0; k < dv; ++k) f[k] = e[k] + config.sigmaVisual * visual_noise(rng);
  }
  return s;
}

Corpus generate_corpus(const CorpusConfig& config, int nTrain, int nTest, int singleSpeakerN) {
  config.validate();
  if (nTrain < 1 || nTest < 1 || singleSpeakerN < 1)
    throw DataError("split sizes must be >= 1 (train=" + std::to_string(nTrain) + ", test=" + std::to_string(nTest) +
                    ", quantfit=" + std::to_string(singleSpeakerN) + ")");
  Corpus c;
  c.config = config;
  c.inventory = make_inventory(config.P, config.V, config.seed, config.d_a, config.d);
  const Grammar grammar = Grammar::builtin(c.inventory);

  auto make_split = [&](const char* name, std::uint64_t tag, int n, bool single_speaker) {
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int spk = single_speaker ? 0 : i % config.S;
      const auto useed = mix_seed({config.seed, tag, static_cast<std::uint64_t>(i)});
      auto s = render(sample_utterance(c.inventory, grammar, spk, useed, config.S), c.inventory, config);
      char id[64];
      std::snprintf(id, sizeof id, "%s-%06d", name, i);
      s.id = id;
      out.push_back(std::move(s));
    }
    return out;
  };
  c.train = make_split("train", 1, nTrain, false);
  c.test = make_split("test", 2, nTest, false);
  c.quantfit = make_split("quantfit", 3, singleSpeakerN, true);
  return c;
}

void write_split(const std::filesystem::path& path, const std::vector<SyntheticSample>& split,
                 const PhonemeInventory& inv) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FileError("cannot open " + path.string() + " for writing");
  for (const auto& s : split) os << sample_to_json(s, inv).dump() << '\n';
  if (!os) throw FileError("write failed: " + path.string());
}

std::vector<SyntheticSample> read_split(const std::filesystem::path& path, const PhonemeInventory& inv) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open " + path.string());
  std::vector<SyntheticSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    SyntheticSample s;
    s.id = j.at("id").get<std::string>();
    s.utterance.speakerId = j.at("speaker").get<int>();
    for (const auto& sym : j.at("transcript")) s.utterance.transcript.push_back(inv.symbol_index(sym.get<std::string>()));
    s.audio = frames_from_json(j.at("audio"), where + " audio");
    s.visual = frames_from_json(j.at("visual"), where + " visual");
    s.align = j.at("align").get<std::vector<int>>();
    if (s.align.size() != s.audio.rows()) throw DataError(where + ": align length differs from audio length");
    if (s.audio.rows() != 2 * s.visual.rows()) throw DataError(where + ": audio length must be twice visual length");
    out.push_back(std::move(s));
  }
  return out;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json meta;
  meta["config"] = to_json(corpus.config);
  meta["splits"] = {{"train", corpus.train.size()}, {"test", corpus.test.size()}, {"quantfit", corpus.quantfit.size()}};
  {
    std::ofstream os(dir / "corpus.json", std::ios::binary | std::ios::trunc);
    if (!os) throw FileError("cannot open " + (dir / "corpus.json").string() + " for writing");
    os << meta.dump(2) << '\n';
  }
  write_split(dir / "train.jsonl", corpus.train, corpus.inventory);
  write_split(dir / "test.jsonl", corpus.test, corpus.inventory);
  write_split(dir / "quantfit.jsonl", corpus.quantfit, corpus.inventory);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream is(dir / "corpus.json", std::ios::binary);
  if (!is) throw FileError("cannot open " + (dir / "corpus.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "corpus.json").string() + ": " + e.what());
  }
  Corpus c;
  c.config = corpus_config_from_json(meta.at("config"));
  c.config.validate();
  c.inventory = make_inventory(c.config.P, c.config.V, c.config.seed, c.config.d_a, c.config.d);
  c.train = read_split(dir / "train.jsonl", c.inventory);
  c.test = read_split(dir / "test.jsonl", c.inventory);
  c.quantfit = read_split(dir / "quantfit.jsonl", c.inventory);
  return c;
}

}  // namespace akvsr
