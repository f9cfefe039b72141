// src/serialization.cpp

#include "akvsr/serialization.hpp"

#include <set>

#include "akvsr/errors.hpp"

namespace akvsr {

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(section) + "." + key + ": wrong type");
  }
}

void reject_unknown(const nlohmann::json& j, const char* section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  std::set<std::string> k(known.begin(), known.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!k.count(it.key())) throw ConfigError(std::string(section) + "." + it.key() + ": unknown field");
}

}  // namespace

nlohmann::json to_json(const CorpusConfig& c) {
  return {{"P", c.P},
          {"V", c.V},
          {"S", c.S},
          {"sigmaAudio", c.sigmaAudio},
          {"sigmaVisual", c.sigmaVisual},
          {"speakerScale", c.speakerScale},
          {"durMin", c.durMin},
          {"durMax", c.durMax},
          {"d_a", c.d_a},
          {"d", c.d},
          {"seed", c.seed}};
}

CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
  reject_unknown(j, "corpus",
                 {"P", "V", "S", "sigmaAudio", "sigmaVisual", "speakerScale", "durMin", "durMax", "d_a", "d", "seed"});
  CorpusConfig c;
  read_field(j, "corpus", "P", c.P);
  read_field(j, "corpus", "V", c.V);
  read_field(j, "corpus", "S", c.S);
  read_field(j, "corpus", "sigmaAudio", c.sigmaAudio);
  read_field(j, "corpus", "sigmaVisual", c.sigmaVisual);
  read_field(j, "corpus", "speakerScale", c.speakerScale);
  read_field(j, "corpus", "durMin", c.durMin);
  read_field(j, "corpus", "durMax", c.durMax);
  read_field(j, "corpus", "d_a", c.d_a);
  read_field(j, "corpus", "d", c.d);
  read_field(j, "corpus", "seed", c.seed);
  return c;
}

}  // namespace akvsr
