// tests/test_pipeline.cpp

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "akvsr/errors.hpp"
#include "akvsr/pipeline.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace akvsr;
namespace fs = std::filesystem;

namespace {

RunConfig tiny() {
  RunConfig c;
  c.data = {24, 8, 16};
  c.clusters = 12;
  c.memoryDim = 16;
  c.memory.context = {1, 16, 2, 32};
  c.memory.decoder = {1, 16, 2, 32};
  c.memory.train.steps = 10;
  c.vsr.abm.dk = c.vsr.abm.dv = 16;
  c.vsr.abm.heads = 2;
  c.vsr.visual = {1, 16, 2, 32};
  c.vsr.decoder = {1, 16, 2, 32};
  c.vsr.train.steps = 10;
  c.sync();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "akvsr_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("run config json round trip") {
  RunConfig c = tiny();
  c.seed = 9;
  c.vsr.unfreezeMemory = true;
  c.sync();
  const auto j = to_json(c);
  const RunConfig back = run_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.memory.train.seed == 9);
  CHECK(back.vsr.abm.d == 16);
  CHECK(to_json(run_config_from_json(nlohmann::json::object())) == to_json(RunConfig{}));
}

TEST_CASE("config validation is total") {
  auto bad = [](const std::function<void(nlohmann::json&)>& edit) {
    nlohmann::json j = to_json(tiny());
    edit(j);
    return j;
  };
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["bogus"] = 1; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["vsr"]["train"]["lr"] = "fast"; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["memoryDim"] = 15; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["corpus"]["V"] = 12; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["clusters"] = 1; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["vsr"]["abmDepth"] = -1; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["vsr"]["dk"] = 15; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["memory"]["train"]["lambda"] = 1.5; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["data"]["nTrain"] = 0; })), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(bad([](auto& j) { j["seeds"] = nlohmann::json::array(); })), ConfigError);
}

TEST_CASE("pipeline writes every artifact and a finite report") {
  const RunConfig c = tiny();
  const Corpus corpus = generate_run_corpus(c);
  const auto dir = scratch("full");
  const auto report = run_pipeline(c, corpus, dir);
  for (const auto& v : {report.asrWer, report.vsrWerBaseline, report.vsrWerAbm, report.purity, report.speakerNmi}) {
    REQUIRE(v.has_value());
    CHECK(std::isfinite(*v));
  }
  for (const char* f : {"quantizer.ckpt.json", "memory.ckpt.json", "vsr.ckpt.json", "vsr_baseline.ckpt.json",
                        "memory.log.jsonl", "vsr.log.jsonl", "report.json"})
    CHECK_MESSAGE(fs::exists(dir / f), f);

  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  for (const char* k : {"asr_wer", "vsr_wer_baseline", "vsr_wer_abm", "purity", "speaker_nmi"}) CHECK(j.contains(k));

  // The stored checkpoints rebuild models that score exactly as reported.
  const auto vsr = vsr_model_from_checkpoint(load_checkpoint(dir / "vsr.ckpt.json"), corpus.config.d, corpus.config.P);
  CHECK(evaluate_vsr(vsr, corpus.test, c.vsr.train.maxDecodeLen) == *report.vsrWerAbm);
  const auto asr = memory_model_from_checkpoint(load_checkpoint(dir / "memory.ckpt.json"), corpus.config.P);
  const auto km = cluster_model_from(load_checkpoint(dir / "quantizer.ckpt.json"));
  CHECK(evaluate_memory_asr(asr, km, corpus.test, c.memory.train.maxDecodeLen) == *report.asrWer);

  // The memory inside the VSR checkpoint is the trained one, untouched.
  const auto mem = load_checkpoint(dir / "memory.ckpt.json").tensors.at("memory.slots");
  CHECK(identical(load_checkpoint(dir / "vsr.ckpt.json").tensors.at("memory.slots"), mem));
}

TEST_CASE("pipeline is byte-reproducible") {
  const RunConfig c = tiny();
  const Corpus corpus = generate_run_corpus(c);
  const auto a = scratch("rep_a"), b = scratch("rep_b");
  run_pipeline(c, corpus, a);
  run_pipeline(c, corpus, b);
  for (const auto& e : fs::directory_iterator(a))
    CHECK_MESSAGE(slurp(e.path()) == slurp(b / e.path().filename()), e.path().filename().string());
}

TEST_CASE("depth-0 pipeline skips the quantizer and memory stages") {
  RunConfig c = tiny();
  c.vsr.abmDepth = 0;
  const Corpus corpus = generate_run_corpus(c);
  const auto dir = scratch("depth0");
  const auto report = run_pipeline(c, corpus, dir);
  CHECK(report.vsrWerBaseline.has_value());
  CHECK_FALSE(report.asrWer.has_value());
  CHECK_FALSE(report.vsrWerAbm.has_value());
  CHECK_FALSE(fs::exists(dir / "quantizer.ckpt.json"));
  CHECK_FALSE(fs::exists(dir / "memory.ckpt.json"));
}

TEST_CASE("ablation contracts") {
  const RunConfig c = tiny();
  const Corpus corpus = generate_run_corpus(c);
  CHECK_THROWS_AS(run_ablation(AblationAxis::AbmDepth, {2}, {0, 1, 2}, c, corpus), ConfigError);
  CHECK_THROWS_AS(run_ablation(AblationAxis::AbmDepth, {0, 2}, {0, 1}, c, corpus), ConfigError);
  // Invalid values are rejected before anything trains, even when listed last.
  CHECK_THROWS_AS(run_ablation(AblationAxis::Clusters, {12, 1}, {0, 1, 2}, c, corpus), ConfigError);
  CHECK_THROWS_AS(run_ablation(AblationAxis::MemoryDim, {16, 15}, {0, 1, 2}, c, corpus), ConfigError);

  const auto depth = run_ablation(AblationAxis::AbmDepth, {0, 1, 2}, {0, 1, 2}, c, corpus);
  CHECK(depth.rows.size() == 9);
  const auto sum = depth.summarize();
  REQUIRE(sum.size() == 3);
  for (const auto& s : sum) CHECK(s.runs == 3);
  for (const auto& r : depth.rows) CHECK((r.axisValue == 0) == (r.asrWer < 0));

  const auto clusters = run_ablation(AblationAxis::Clusters, {8, 12}, {0, 1, 2}, c, corpus);
  CHECK(clusters.rows.size() == 6);
  for (const auto& r : clusters.rows) {
    CHECK(r.asrWer >= 0);
    CHECK(r.purity >= 0);
  }
  std::ostringstream os;
  clusters.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 7);
}

TEST_CASE("with_axis_value propagates widths") {
  const RunConfig c = with_axis_value(tiny(), AblationAxis::MemoryDim, 24);
  CHECK(c.memory.memoryDim == 24);
  CHECK(c.memory.context.d == 24);
  CHECK(c.vsr.abm.d == 24);
  CHECK(c.vsr.decoder.d == 24);
}
