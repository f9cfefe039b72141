// src/trainer.cpp

#include "akvsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "akvsr/errors.hpp"
#include "akvsr/evalkit.hpp"
#include "akvsr/rng.hpp"

namespace akvsr {

// ---- losses ----------------------------------------------------------------

void HybridLossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
}

Var attention_loss(const DecoderStack& decoder, const Var& enc, std::span<const int> target) {
  const Vocab& vocab = decoder.vocab;
  if (target.empty() || target.back() != vocab.eos()) throw ContractError("attention_loss: target must end with EOS");
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i] == Vocab::kBlank)
      throw ContractError("attention_loss: target position " + std::to_string(i) + " is blank");

  std::vector<int> input;
  input.reserve(target.size());
  input.push_back(vocab.bos());
  input.insert(input.end(), target.begin(), target.end() - 1);
  const Var logp = log_softmax_rows(decoder_logits(decoder, input, enc));
  const auto V = static_cast<std::ptrdiff_t>(logp.cols());
  std::vector<std::ptrdiff_t> idx(target.size());
  for (std::size_t l = 0; l < target.size(); ++l) idx[l] = static_cast<std::ptrdiff_t>(l) * V + target[l];
  return scale(sum(take(logp, idx)), -1.0);
}

std::optional<Var> hybrid_loss(const Var& ctcLoss, const Var& attLoss, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!std::isfinite(ctcLoss.item())) return std::nullopt;
  if (lambda == 0.0) return attLoss;
  if (lambda == 1.0) return ctcLoss;
  return add(scale(attLoss, 1.0 - lambda), scale(ctcLoss, lambda));
}

namespace {

Tensor reshape_copy(const Tensor& t, Shape shape) {
  return Tensor(std::move(shape), std::vector<double>(t.data().begin(), t.data().end()));
}

}  // namespace

std::vector<int> joint_greedy_decode(const DecoderStack& decoder, const Var& enc, const Tensor& ctcLogProbs,
                                     double ctcWeight, int maxLen) {
  if (!(ctcWeight >= 0.0 && ctcWeight <= 1.0)) throw ConfigError("decode ctc weight must lie in [0, 1]");
  if (ctcWeight == 0.0) return greedy_decode(decoder, enc, maxLen);
  if (maxLen < 1) throw ContractError("joint_greedy_decode: maxLen must be >= 1");
  NoGradGuard guard;
  const Vocab& vocab = decoder.vocab;
  const CtcPrefixScorer scorer(ctcLogProbs);
  CtcPrefixScorer::State g = scorer.initial();
  std::vector<int> prefix = {vocab.bos()};
  std::vector<int> out;
  for (int step = 0; step < maxLen; ++step) {
    const Tensor logits = decode_step(decoder, prefix, enc);
    const Tensor logp = log_softmax_rows(Var::constant(reshape_copy(logits, {1, logits.size()}))).value();
    int best = vocab.eos();
    double bestScore = (1.0 - ctcWeight) * logp[static_cast<std::size_t>(best)] + ctcWeight * scorer.final_score(g);
    CtcPrefixScorer::State bestState;
    for (int t = 1; t <= vocab.phonemes; ++t) {
      CtcPrefixScorer::State h = scorer.extend(g, t);
      const double score = (1.0 - ctcWeight) * logp[static_cast<std::size_t>(t)] + ctcWeight * h.prefixScore;
      if (score > bestScore) {
        best = t;
        bestScore = score;
        bestState = std::move(h);
      }
    }
    if (best == vocab.eos()) break;
    out.push_back(best);
    prefix.push_back(best);
    g = std::move(bestState);
  }
  return out;
}

// ---- optimizer ---------------------------------------------------------------

void sgd_adam_step(AdamState& state, const ParamSet& params, const GradMap& grads, const AdamConfig& config) {
  for (const auto& p : params.items()) {
    if (!p.var.requires_grad()) throw ContractError("optimizer step on frozen parameter '" + p.name + "'");
    if (grads.contains(p.var) && !grads.at(p.var).all_finite())
      throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (const auto& p : params.items()) {
    Var var = p.var;
    Tensor& w = var.mutable_value();
    auto [mit, mnew] = state.m.try_emplace(p.name, w.shape(), 0.0);
    auto [vit, vnew] = state.v.try_emplace(p.name, w.shape(), 0.0);
    auto m = mit->second.data();
    auto v = vit->second.data();
    auto x = w.data();
    const bool has = grads.contains(var);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = has ? grads.at(var)[i] : 0.0;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      x[i] -= config.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.eps);
    }
  }
}

// ---- shared loop -------------------------------------------------------------

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("train.lambda must lie in [0, 1]");
  if (evalEvery < 0) throw ConfigError("train.evalEvery must be >= 0");
  if (evalSamples < 0) throw ConfigError("train.evalSamples must be >= 0");
  if (maxDecodeLen < 1) throw ConfigError("train.maxDecodeLen must be >= 1");
}

void write_step_log(std::ostream& out, const StepLog& s) {
  nlohmann::json j;
  j["step"] = s.step;
  j["loss"] = s.loss;
  j["ctc"] = s.ctc;
  j["att"] = s.att;
  j["wer_eval"] = s.werEval ? nlohmann::json(*s.werEval) : nlohmann::json(nullptr);
  if (s.dropped > 0) j["dropped"] = s.dropped;
  out << j.dump() << '\n';
}

namespace {

using SampleLossFn = std::function<SampleLoss(std::size_t)>;
using EvalFn = std::function<double()>;

// Mini-batch Adam over `nSamples` examples, visiting them in a seeded
// per-epoch order. Returns the last evaluation result.
double run_loop(const ParamSet& params, std::size_t nSamples, const TrainConfig& config, std::uint64_t stageTag,
                const SampleLossFn& lossFn, const EvalFn& evalFn, TrainState& state, std::vector<StepLog>& log,
                std::ostream* out) {
  if (nSamples == 0) throw DataError("training split is empty");
  Rng rng(mix_seed({config.seed, stageTag}));
  std::vector<std::size_t> order(nSamples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  const AdamConfig adam{config.lr};
  state.seed = config.seed;
  double lastEval = std::nan("");
  for (int step = 1; step <= config.steps; ++step) {
    StepLog s;
    s.step = step;
    Var total;
    int kept = 0;
    for (int b = 0; b < config.batch; ++b) {
      if (cursor == nSamples) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      SampleLoss sl = lossFn(idx);
      if (sl.dropped) {
        ++s.dropped;
        continue;
      }
      total = total ? add(total, sl.total) : sl.total;
      s.att += sl.att;
      s.ctc += sl.ctc;
      ++kept;
    }
    if (s.dropped > 0)
      std::cerr << "warning: step " << step << " dropped " << s.dropped << " element(s) with infeasible CTC\n";
    if (kept > 0) {
      const Var loss = scale(total, 1.0 / kept);
      s.loss = loss.item();
      s.att /= kept;
      s.ctc /= kept;
      if (!std::isfinite(s.loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
      const GradMap grads = backward(loss);
      sgd_adam_step(state.adam, params, grads, adam);
    }
    state.step = step;
    state.lossHistory.push_back(s.loss);
    const bool evalNow = (config.evalEvery > 0 && step % config.evalEvery == 0) || step == config.steps;
    if (evalNow) {
      lastEval = evalFn();
      s.werEval = lastEval;
    }
    if (out) write_step_log(*out, s);
    log.push_back(s);
  }
  if (config.steps == 0) lastEval = evalFn();
  return lastEval;
}

std::span<const SyntheticSample> eval_slice(std::span<const SyntheticSample> split, int n) {
  if (n <= 0 || static_cast<std::size_t>(n) >= split.size()) return split;
  return split.first(static_cast<std::size_t>(n));
}

std::vector<int> tokens_of(const Vocab& vocab, std::span<const int> transcript) {
  return vocab.encode(transcript, false);
}

}  // namespace

// ---- stage 1 -----------------------------------------------------------------

MemoryAsrModel MemoryAsrModel::make(const MemoryAsrConfig& config, int clusters, int phonemes, std::uint64_t seed) {
  if (config.memoryDim != config.context.d)
    throw ConfigError("memoryDim " + std::to_string(config.memoryDim) + " must equal the context encoder width " +
                      std::to_string(config.context.d));
  if (config.decoder.d != config.context.d) throw ConfigError("decoder width must equal the context encoder width");
  MemoryAsrModel m;
  m.vocab = Vocab{phonemes};
  m.decodeCtcWeight = config.decodeCtcWeight;
  m.memory = init_memory(clusters, config.memoryDim, mix_seed({seed, 0x51}));
  m.inputNorm = LayerNormParams::make(static_cast<std::size_t>(config.memoryDim));
  Rng rng(mix_seed({seed, 0x52}));
  m.context = EncoderStack::make(config.context, rng);
  m.decoder = DecoderStack::make(config.decoder, m.vocab, rng);
  m.ctcHead = Linear::make(static_cast<std::size_t>(config.context.d), static_cast<std::size_t>(m.vocab.size()), rng);
  return m;
}

ParamSet MemoryAsrModel::params() const {
  ParamSet ps;
  ps.add("memory.slots", memory.slots);
  inputNorm.collect(ps, "context.in_ln");
  context.collect(ps, "context");
  decoder.collect(ps, "decoder");
  ctcHead.collect(ps, "ctc");
  return ps;
}

Var MemoryAsrModel::encode(const ClusterLabelSeq& labels) const {
  return akvsr::encode(context, inputNorm(lookup(memory, labels)));
}

std::vector<int> MemoryAsrModel::transcribe(const ClusterLabelSeq& labels, int maxLen) const {
  NoGradGuard guard;
  const Var enc = encode(labels);
  if (decodeCtcWeight == 0.0) return greedy_decode(decoder, enc, maxLen);
  return joint_greedy_decode(decoder, enc, log_softmax_rows(ctcHead(enc)).value(), decodeCtcWeight, maxLen);
}

SampleLoss memory_asr_sample_loss(const MemoryAsrModel& model, const ClusterLabelSeq& labels,
                                  std::span<const int> transcript, double lambda) {
  const Var enc = model.encode(labels);
  const auto tokens = tokens_of(model.vocab, transcript);
  const CtcResult ctc = ctc_loss(log_softmax_rows(model.ctcHead(enc)), tokens);
  const Var att = attention_loss(model.decoder, enc, model.vocab.encode(transcript, true));
  SampleLoss out;
  out.att = att.item();
  out.ctc = ctc.loss.item();
  auto h = ctc.feasible ? hybrid_loss(ctc.loss, att, lambda) : std::nullopt;
  if (!h) {
    out.dropped = true;
    return out;
  }
  out.total = *h;
  return out;
}

double evaluate_memory_asr(const MemoryAsrModel& model, const ClusterModel& clusters,
                           std::span<const SyntheticSample> split, int maxLen) {
  WerAccumulator acc;
  for (const auto& s : split) {
    const auto hyp = model.transcribe(quantize(clusters, s.audio), maxLen);
    acc.add(wer(hyp, tokens_of(model.vocab, s.utterance.transcript)));
  }
  return acc.rate();
}

MemoryAsrResult train_memory_asr(const Corpus& corpus, const ClusterModel& clusters, const MemoryAsrConfig& config,
                                 std::ostream* stepLog) {
  config.train.validate();
  if (clusters.dim() != static_cast<std::size_t>(corpus.config.d_a))
    throw ConfigError("cluster model dimension does not match the corpus audio dimension");
  MemoryAsrResult r{MemoryAsrModel::make(config, static_cast<int>(clusters.clusters()), corpus.config.P,
                                         config.train.seed),
                    {}, {}, 0.0};
  if (r.model.memory.size() != clusters.clusters())
    throw ConfigError("memory slot count does not match the cluster count");

  std::vector<ClusterLabelSeq> labels;
  labels.reserve(corpus.train.size());
  for (const auto& s : corpus.train) labels.push_back(quantize(clusters, s.audio));

  const ParamSet params = r.model.params();
  const auto held = eval_slice(corpus.test, config.train.evalSamples);
  r.heldOutWer = run_loop(
      params, corpus.train.size(), config.train, 0x5701,
      [&](std::size_t i) {
        return memory_asr_sample_loss(r.model, labels[i], corpus.train[i].utterance.transcript, config.train.lambda);
      },
      [&] { return evaluate_memory_asr(r.model, clusters, held, config.train.maxDecodeLen); }, r.state, r.log,
      stepLog);
  return r;
}

// ---- stage 2 -----------------------------------------------------------------

VsrModel VsrModel::make(const VsrConfig& config, int visualDim, int phonemes, const CompactAudioMemory& memory,
                        std::uint64_t seed) {
  config.abm.validate();
  const int d = config.visual.d;
  if (config.abm.d != d || config.decoder.d != d)
    throw ConfigError("visual encoder, ABM and decoder widths must agree");
  if (config.abmDepth < 0) throw ConfigError("abmDepth must be >= 0");
  if (config.abmDepth > 0 && memory.dim() != static_cast<std::size_t>(d))
    throw ConfigError("memory dimension " + std::to_string(memory.dim()) + " does not match model width " +
                      std::to_string(d));
  VsrModel m;
  m.vocab = Vocab{phonemes};
  m.decodeCtcWeight = config.decodeCtcWeight;
  Rng rng(mix_seed({seed, 0x61}));
  m.inputProjection = Linear::make(static_cast<std::size_t>(visualDim), static_cast<std::size_t>(d), rng);
  m.visual = EncoderStack::make(config.visual, rng);
  m.abm = AbmStack::make(config.abm, config.abmDepth, rng);
  m.decoder = DecoderStack::make(config.decoder, m.vocab, rng);
  m.ctcHead = Linear::make(static_cast<std::size_t>(d), static_cast<std::size_t>(m.vocab.size()), rng);
  if (memory.slots) {
    m.memory = config.unfreezeMemory ? CompactAudioMemory{Var::leaf(memory.slots.value(), true), false}
                                     : freeze(memory);
  }
  return m;
}

ParamSet VsrModel::params() const {
  ParamSet ps;
  inputProjection.collect(ps, "encoder.in");
  visual.collect(ps, "encoder");
  abm.collect(ps, "abm");
  decoder.collect(ps, "decoder");
  ctcHead.collect(ps, "ctc");
  if (memory.slots && !memory.frozen && abm.depth() > 0) ps.add("memory.slots", memory.slots);
  return ps;
}

ParamSet VsrModel::checkpoint_tensors() const {
  ParamSet ps = params();
  if (memory.slots && !ps.contains("memory.slots")) ps.add("memory.slots", memory.slots);
  return ps;
}

Var VsrModel::complement(const Tensor& visualFeatures) const {
  const Var f = akvsr::encode(visual, inputProjection(Var::constant(visualFeatures)));
  return abm.depth() == 0 ? f : abm_forward(abm, f, memory);
}

std::vector<int> VsrModel::transcribe(const Tensor& visualFeatures, int maxLen) const {
  NoGradGuard guard;
  const Var enc = complement(visualFeatures);
  if (decodeCtcWeight == 0.0) return greedy_decode(decoder, enc, maxLen);
  return joint_greedy_decode(decoder, enc, log_softmax_rows(ctcHead(enc)).value(), decodeCtcWeight, maxLen);
}

SampleLoss vsr_sample_loss(const VsrModel& model, const Tensor& visualFeatures, std::span<const int> transcript,
                           double lambda) {
  const Var enc = model.complement(visualFeatures);
  const auto tokens = tokens_of(model.vocab, transcript);
  const CtcResult ctc = ctc_loss(log_softmax_rows(model.ctcHead(enc)), tokens);
  SampleLoss out;
  out.ctc = ctc.loss.item();
  if (!ctc.feasible) {
    out.dropped = true;
    return out;
  }
  const Var att = attention_loss(model.decoder, enc, model.vocab.encode(transcript, true));
  out.att = att.item();
  auto h = hybrid_loss(ctc.loss, att, lambda);
  if (!h) {
    out.dropped = true;
    return out;
  }
  out.total = *h;
  return out;
}

double evaluate_vsr(const VsrModel& model, std::span<const SyntheticSample> split, int maxLen) {
  WerAccumulator acc;
  for (const auto& s : split)
    acc.add(wer(model.transcribe(s.visual, maxLen), tokens_of(model.vocab, s.utterance.transcript)));
  return acc.rate();
}

VsrResult train_vsr(const Corpus& corpus, const CompactAudioMemory& memory, const VsrConfig& config,
                    std::ostream* stepLog) {
  config.train.validate();
  if (config.abmDepth > 0 && !memory.slots) throw ConfigError("abmDepth > 0 needs a memory");
  VsrResult r{VsrModel::make(config, corpus.config.d, corpus.config.P, memory, config.train.seed), {}, {}, 0.0};
  const ParamSet params = r.model.params();
  r.testWer = run_loop(
      params, corpus.train.size(), config.train, 0x5702,
      [&](std::size_t i) {
        return vsr_sample_loss(r.model, corpus.train[i].visual, corpus.train[i].utterance.transcript,
                               config.train.lambda);
      },
      [&] { return evaluate_vsr(r.model, eval_slice(corpus.test, config.train.evalSamples), config.train.maxDecodeLen); },
      r.state, r.log, stepLog);
  return r;
}

}  // namespace akvsr
