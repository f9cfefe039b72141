// akvsr/trainer.hpp
//
// Losses, Adam, and the two training stages: memory ASR (audio clusters ->
// memory slots -> context encoder -> decoder) and VSR (visual encoder -> ABM
// over the frozen memory -> decoder).

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "akvsr/abm.hpp"
#include "akvsr/ctc.hpp"
#include "akvsr/memory.hpp"
#include "akvsr/quantizer.hpp"
#include "akvsr/seqnet.hpp"
#include "akvsr/synth.hpp"

namespace akvsr {

// ---- losses ----------------------------------------------------------------

struct HybridLossConfig {
  double lambda = 0.1;
  void validate() const;
};

// Teacher-forced negative log-likelihood of `target` (token ids, EOS last).
Var attention_loss(const DecoderStack& decoder, const Var& enc, std::span<const int> target);

// (1 - lambda) att + lambda ctc. Returns nullopt when ctc is not finite,
// which marks the batch element for dropping.
std::optional<Var> hybrid_loss(const Var& ctcLoss, const Var& attLoss, double lambda);

// Greedy decoding over phonemes and EOS where each step maximizes
// (1 - w) log p_att + w log p_ctc_prefix. w = 0 is plain greedy_decode.
std::vector<int> joint_greedy_decode(const DecoderStack& decoder, const Var& enc, const Tensor& ctcLogProbs,
                                     double ctcWeight, int maxLen);

// ---- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  std::map<std::string, Tensor> m, v;
};

// Updates every parameter in `params` in place. Throws ContractError for a
// parameter that does not require gradients and NumericError for a
// non-finite gradient, naming the parameter.
void sgd_adam_step(AdamState& state, const ParamSet& params, const GradMap& grads, const AdamConfig& config);

// ---- shared training knobs ---------------------------------------------------

struct TrainConfig {
  int steps = 3000;
  int batch = 8;
  double lr = 3e-4;
  double lambda = 0.1;
  std::uint64_t seed = 0;
  int evalEvery = 0;    // 0: evaluate only after the last step
  int evalSamples = 0;  // held-out samples per evaluation; 0 = all
  int maxDecodeLen = 16;

  void validate() const;
};

struct StepLog {
  int step = 0;
  double loss = 0.0;
  double ctc = 0.0;
  double att = 0.0;
  std::optional<double> werEval;
  int dropped = 0;
};

struct TrainState {
  int step = 0;
  AdamState adam;
  std::uint64_t seed = 0;
  std::vector<double> lossHistory;
};

// ---- stage 1 -----------------------------------------------------------------

struct MemoryAsrConfig {
  int memoryDim = 32;
  StackConfig context{4, 32, 4, 64};
  StackConfig decoder{2, 32, 4, 64};
  double decodeCtcWeight = 0.5;
  TrainConfig train;
};

struct MemoryAsrModel {
  Vocab vocab;
  double decodeCtcWeight = 0.0;
  CompactAudioMemory memory;
  // Slots start near zero; normalizing the looked-up rows keeps them on the
  // scale of the positional table from the first step.
  LayerNormParams inputNorm;
  EncoderStack context;
  DecoderStack decoder;
  Linear ctcHead;

  static MemoryAsrModel make(const MemoryAsrConfig& config, int clusters, int phonemes, std::uint64_t seed);
  ParamSet params() const;
  Var encode(const ClusterLabelSeq& labels) const;
  std::vector<int> transcribe(const ClusterLabelSeq& labels, int maxLen) const;
};

struct SampleLoss {
  Var total;  // hybrid; empty when dropped
  double att = 0.0;
  double ctc = 0.0;
  bool dropped = false;
};

SampleLoss memory_asr_sample_loss(const MemoryAsrModel& model, const ClusterLabelSeq& labels,
                                  std::span<const int> transcript, double lambda);

struct MemoryAsrResult {
  MemoryAsrModel model;
  TrainState state;
  std::vector<StepLog> log;
  double heldOutWer = 0.0;
};

MemoryAsrResult train_memory_asr(const Corpus& corpus, const ClusterModel& clusters, const MemoryAsrConfig& config,
                                 std::ostream* stepLog = nullptr);

double evaluate_memory_asr(const MemoryAsrModel& model, const ClusterModel& clusters,
                           std::span<const SyntheticSample> split, int maxLen);

// ---- stage 2 -----------------------------------------------------------------

struct VsrConfig {
  int abmDepth = 2;
  AbmConfig abm;
  StackConfig visual{2, 32, 4, 64};
  StackConfig decoder{2, 32, 4, 64};
  bool unfreezeMemory = false;
  double decodeCtcWeight = 0.0;
  TrainConfig train;
};

struct VsrModel {
  Vocab vocab;
  double decodeCtcWeight = 0.0;
  Linear inputProjection;  // corpus visual dim -> model width
  EncoderStack visual;
  AbmStack abm;
  DecoderStack decoder;
  Linear ctcHead;
  CompactAudioMemory memory;

  static VsrModel make(const VsrConfig& config, int visualDim, int phonemes, const CompactAudioMemory& memory,
                       std::uint64_t seed);
  // Trainable parameters; memory.slots appears only when it is unfrozen.
  ParamSet params() const;
  // Everything worth persisting, memory included.
  ParamSet checkpoint_tensors() const;
  Var complement(const Tensor& visualFeatures) const;
  std::vector<int> transcribe(const Tensor& visualFeatures, int maxLen) const;
};

SampleLoss vsr_sample_loss(const VsrModel& model, const Tensor& visualFeatures, std::span<const int> transcript,
                           double lambda);

struct VsrResult {
  VsrModel model;
  TrainState state;
  std::vector<StepLog> log;
  double testWer = 0.0;
};

VsrResult train_vsr(const Corpus& corpus, const CompactAudioMemory& memory, const VsrConfig& config,
                    std::ostream* stepLog = nullptr);

double evaluate_vsr(const VsrModel& model, std::span<const SyntheticSample> split, int maxLen);

void write_step_log(std::ostream& out, const StepLog& s);

}  // namespace akvsr
