// akvsr/pipeline.hpp
//
// Run configuration, the staged pipeline (quantizer -> memory ASR -> VSR ->
// report) and ablation sweeps over it.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "akvsr/checkpoint.hpp"
#include "akvsr/errors.hpp"
#include "akvsr/evalkit.hpp"
#include "akvsr/trainer.hpp"
#include "json.hpp"

namespace akvsr {

struct DataSizes {
  int nTrain = 2000;
  int nTest = 300;
  int nQuantfit = 200;
};

// One width (memoryDim) is shared by the memory, every stack and the ABM;
// the stack configs' own d fields are overwritten from it.
struct RunConfig {
  CorpusConfig corpus;
  DataSizes data;
  int clusters = 16;
  int kmeansIter = 100;
  int memoryDim = 32;
  MemoryAsrConfig memory;
  VsrConfig vsr;
  bool baseline = true;  // also train the depth-0 model for the report
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string corpusDir = "corpus";
  std::string outDir = "run";

  RunConfig();
  // Propagates memoryDim and seed into the stage configs.
  void sync();
  void set_seed(std::uint64_t s);
  // Every module invariant that can be checked without data.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
// Missing fields keep defaults; unknown fields and bad types are ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// A failure inside a named stage; the CLI reports the stage and exits 1.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

Corpus generate_run_corpus(const RunConfig& config);

ClusterModel fit_quantizer_stage(const RunConfig& config, const Corpus& corpus, std::uint64_t seed);
MemoryAsrResult train_memory_stage(const RunConfig& config, const Corpus& corpus, const ClusterModel& clusters,
                                   std::uint64_t seed, std::ostream* stepLog = nullptr);
// memory may be empty only for depth 0.
VsrResult train_vsr_stage(const RunConfig& config, const Corpus& corpus, const CompactAudioMemory& memory, int depth,
                          std::uint64_t seed, std::ostream* stepLog = nullptr);

Checkpoint memory_checkpoint(const RunConfig& config, const MemoryAsrModel& model);
CompactAudioMemory memory_from_checkpoint(const Checkpoint& ckpt);
Checkpoint vsr_checkpoint(const RunConfig& config, const VsrModel& model, int depth);

// Rebuild models from their checkpoints; the run config stored in the
// checkpoint decides the architecture. A missing or mismatched tensor is an
// IntegrityError.
MemoryAsrModel memory_model_from_checkpoint(const Checkpoint& ckpt, int phonemes);
VsrModel vsr_model_from_checkpoint(const Checkpoint& ckpt, int visualDim, int phonemes);

struct PipelineReport {
  std::optional<double> asrWer;
  std::optional<double> vsrWerBaseline;
  std::optional<double> vsrWerAbm;
  std::optional<double> purity;
  std::optional<double> speakerNmi;

  nlohmann::json to_json() const;
};

// Reads nothing but `corpus`; writes checkpoints, step logs and report.json
// under outDir. Stage failures surface as StageError.
PipelineReport run_pipeline(const RunConfig& config, const Corpus& corpus, const std::filesystem::path& outDir,
                            std::ostream* progress = nullptr);

// Applies one axis value to a copy of base.
RunConfig with_axis_value(const RunConfig& base, AblationAxis axis, int value);

// Every (value, seed) configuration is validated before any training.
AblationResult run_ablation(AblationAxis axis, const std::vector<int>& values, const std::vector<std::uint64_t>& seeds,
                            const RunConfig& base, const Corpus& corpus, std::ostream* progress = nullptr);

}  // namespace akvsr
