// src/checkpoint.cpp

#include "akvsr/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "akvsr/errors.hpp"

namespace akvsr {

static_assert(std::endian::native == std::endian::little, "checkpoint byte order assumes a little-endian host");

namespace {

std::string tensor_bytes(const Tensor& t) {
  std::string out(t.size() * sizeof(double), '\0');
  if (!out.empty()) std::memcpy(out.data(), t.data().data(), out.size());
  return out;
}

// The digest covers everything except itself.
std::string content_digest(const nlohmann::json& tensors, const nlohmann::json& config) {
  const nlohmann::json body = {{"config", config}, {"tensors", tensors}};
  return git_blob_sha1(body.dump());
}

}  // namespace

std::string base64_encode(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw IntegrityError("base64: length " + std::to_string(text.size()) + " is not a multiple of 4");
  if (text.empty()) return {};
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw IntegrityError("base64: malformed input");
  // EVP_DecodeBlock keeps the zero bytes that padding stands for.
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string git_blob_sha1(const std::string& payload) {
  std::string blob = "blob " + std::to_string(payload.size());
  blob.push_back('\0');
  blob += payload;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw IntegrityError("sha1: digest computation failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : ckpt.tensors)
    tensors[name] = {{"shape", t.shape()}, {"dtype", "f64"}, {"data", base64_encode(tensor_bytes(t))}};
  return {{"version", kCheckpointVersion},
          {"tensors", tensors},
          {"meta", {{"config", ckpt.config}, {"digest", content_digest(tensors, ckpt.config)}}}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version")) throw IntegrityError("checkpoint: missing version");
  if (!j["version"].is_string()) throw IntegrityError("checkpoint: version is not a string");
  const std::string version = j["version"].get<std::string>();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint: version " + version + " is not " + kCheckpointVersion);
  if (!j.contains("tensors") || !j["tensors"].is_object()) throw IntegrityError("checkpoint: missing tensors");
  if (!j.contains("meta") || !j["meta"].is_object()) throw IntegrityError("checkpoint: missing meta");
  const auto& meta = j["meta"];
  if (!meta.contains("digest") || !meta["digest"].is_string()) throw IntegrityError("checkpoint: missing digest");

  Checkpoint ckpt;
  ckpt.config = meta.contains("config") ? meta["config"] : nlohmann::json::object();
  const std::string expected = content_digest(j["tensors"], ckpt.config);
  if (meta["digest"].get<std::string>() != expected)
    throw IntegrityError("checkpoint: digest mismatch (stored " + meta["digest"].get<std::string>() + ", computed " +
                         expected + ")");

  for (auto it = j["tensors"].begin(); it != j["tensors"].end(); ++it) {
    const auto& e = it.value();
    try {
      if (e.at("dtype").get<std::string>() != "f64")
        throw IntegrityError("checkpoint: tensor " + it.key() + " has dtype " + e.at("dtype").get<std::string>());
      const Shape shape = e.at("shape").get<Shape>();
      std::size_t count = 1;
      for (auto s : shape) count *= s;
      const std::string bytes = base64_decode(e.at("data").get<std::string>());
      if (bytes.size() != count * sizeof(double))
        throw IntegrityError("checkpoint: tensor " + it.key() + " holds " + std::to_string(bytes.size()) +
                             " bytes, shape needs " + std::to_string(count * sizeof(double)));
      std::vector<double> data(count);
      if (count) std::memcpy(data.data(), bytes.data(), bytes.size());
      ckpt.tensors.emplace(it.key(), Tensor(shape, std::move(data)));
    } catch (const IntegrityError&) {
      throw;
    } catch (const std::exception& ex) {
      throw IntegrityError("checkpoint: tensor " + it.key() + ": " + ex.what());
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << checkpoint_to_json(ckpt).dump() << '\n';
  if (!out) throw FileError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("checkpoint " + path.string() + ": not valid JSON (" + e.what() + ")");
  }
  return checkpoint_from_json(j);
}

Checkpoint checkpoint_of(const ParamSet& params, nlohmann::json config) {
  return Checkpoint{params.snapshot(), std::move(config)};
}

Checkpoint cluster_checkpoint(const ClusterModel& model) {
  Checkpoint c;
  c.tensors.emplace("quantizer.centroids", model.centroids);
  c.config = {{"iterations", model.iterations}, {"inertia", model.inertia}, {"inertiaHistory", model.inertiaHistory}};
  return c;
}

ClusterModel cluster_model_from(const Checkpoint& ckpt) {
  auto it = ckpt.tensors.find("quantizer.centroids");
  if (it == ckpt.tensors.end() || it->second.rank() != 2)
    throw IntegrityError("checkpoint: no quantizer.centroids matrix");
  ClusterModel m;
  m.centroids = it->second;
  try {
    m.iterations = ckpt.config.value("iterations", 0);
    m.inertia = ckpt.config.value("inertia", 0.0);
    m.inertiaHistory = ckpt.config.value("inertiaHistory", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint: quantizer meta: ") + e.what());
  }
  return m;
}

}  // namespace akvsr
