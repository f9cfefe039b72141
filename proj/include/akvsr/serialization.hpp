// akvsr/serialization.hpp
//
// JSON mappings for configuration records. Field names match the on-disk
// config schema documented in the README.

#pragma once

#include "akvsr/synth.hpp"
#include "json.hpp"

namespace akvsr {

nlohmann::json to_json(const CorpusConfig& c);
// Missing fields keep their defaults; unknown fields are a ConfigError.
CorpusConfig corpus_config_from_json(const nlohmann::json& j);

}  // namespace akvsr
