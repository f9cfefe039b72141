// akvsr/checkpoint.hpp
//
// Portable checkpoint files: a JSON document holding named f64 tensors as
// base64 little-endian bytes, a config snapshot, and a git-style SHA-1 over
// the tensor section.
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "akvsr/nn.hpp"
#include "akvsr/quantizer.hpp"
#include "akvsr/tensor.hpp"
#include "json.hpp"

namespace akvsr {

inline constexpr const char* kCheckpointVersion = "akvsr-ckpt/1";

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  nlohmann::json config = nlohmann::json::object();
};

std::string base64_encode(const std::string& bytes);
// Throws IntegrityError on malformed input.
std::string base64_decode(const std::string& text);

// "blob <n>\0" + payload, hashed with SHA-1, as lowercase hex.
std::string git_blob_sha1(const std::string& payload);

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
// Throws VersionError for a foreign version and IntegrityError for anything
// else that does not decode or verify.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

// The file content is a single compact JSON line, so equal checkpoints give
// byte-identical files.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint checkpoint_of(const ParamSet& params, nlohmann::json config = nlohmann::json::object());

Checkpoint cluster_checkpoint(const ClusterModel& model);
ClusterModel cluster_model_from(const Checkpoint& ckpt);

}  // namespace akvsr
