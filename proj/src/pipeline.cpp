// src/pipeline.cpp

#include "akvsr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "akvsr/serialization.hpp"

namespace akvsr {

namespace {

template <typename T>
void read(const nlohmann::json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(section + "." + key + ": wrong type");
  }
}

void only(const nlohmann::json& j, const std::string& section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  const std::set<std::string> k(known.begin(), known.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!k.count(it.key())) throw ConfigError(section + "." + it.key() + ": unknown field");
}

nlohmann::json stack_json(const StackConfig& s) { return {{"layers", s.layers}, {"heads", s.heads}, {"ff", s.ff}}; }

void stack_from(const nlohmann::json& j, const std::string& section, StackConfig& s) {
  only(j, section, {"layers", "heads", "ff"});
  read(j, section, "layers", s.layers);
  read(j, section, "heads", s.heads);
  read(j, section, "ff", s.ff);
}

nlohmann::json train_json(const TrainConfig& t) {
  return {{"steps", t.steps},         {"batch", t.batch},           {"lr", t.lr},
          {"lambda", t.lambda},       {"evalEvery", t.evalEvery},   {"evalSamples", t.evalSamples},
          {"maxDecodeLen", t.maxDecodeLen}};
}

void train_from(const nlohmann::json& j, const std::string& section, TrainConfig& t) {
  only(j, section, {"steps", "batch", "lr", "lambda", "evalEvery", "evalSamples", "maxDecodeLen"});
  read(j, section, "steps", t.steps);
  read(j, section, "batch", t.batch);
  read(j, section, "lr", t.lr);
  read(j, section, "lambda", t.lambda);
  read(j, section, "evalEvery", t.evalEvery);
  read(j, section, "evalSamples", t.evalSamples);
  read(j, section, "maxDecodeLen", t.maxDecodeLen);
}

void check_stack(const StackConfig& s, const std::string& section, bool allowEmpty) {
  if (s.layers < (allowEmpty ? 0 : 1))
    throw ConfigError(section + ".layers must be >= " + std::string(allowEmpty ? "0" : "1"));
  if (s.heads < 1 || s.d % s.heads != 0)
    throw ConfigError(section + ".heads must divide memoryDim (" + std::to_string(s.d) + ")");
  if (s.ff < 1) throw ConfigError(section + ".ff must be >= 1");
}

void check_weight(double w, const std::string& name) {
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError(name + " must lie in [0, 1]");
}

template <typename F>
auto staged(const std::string& stage, std::ostream* progress, F&& f) -> decltype(f()) {
  if (progress) *progress << "[" << stage << "] start\n" << std::flush;
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const IntegrityError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

RunConfig::RunConfig() {
  // Stage 2 learns far slower than stage 1 on the ambiguous corpus.
  vsr.train.steps = 4000;
  vsr.train.lr = 1e-3;
  sync();
}

void RunConfig::sync() {
  memory.memoryDim = memoryDim;
  memory.context.d = memory.decoder.d = memoryDim;
  vsr.visual.d = vsr.decoder.d = vsr.abm.d = memoryDim;
  memory.train.seed = vsr.train.seed = seed;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  sync();
}

void RunConfig::validate() const {
  corpus.validate();
  if (data.nTrain < 1 || data.nTest < 1 || data.nQuantfit < 1) throw ConfigError("data: split sizes must be >= 1");
  if (clusters < 2) throw ConfigError("clusters must be >= 2");
  if (kmeansIter < 1) throw ConfigError("kmeansIter must be >= 1");
  if (memoryDim < 8) throw ConfigError("memoryDim must be >= 8");
  if (memory.memoryDim != memoryDim || memory.context.d != memoryDim || memory.decoder.d != memoryDim ||
      vsr.visual.d != memoryDim || vsr.decoder.d != memoryDim || vsr.abm.d != memoryDim)
    throw ConfigError("stack widths must equal memoryDim");
  check_stack(memory.context, "memory.context", false);
  check_stack(memory.decoder, "memory.decoder", false);
  check_stack(vsr.visual, "vsr.visual", true);
  check_stack(vsr.decoder, "vsr.decoder", false);
  check_weight(memory.decodeCtcWeight, "memory.decodeCtcWeight");
  check_weight(vsr.decodeCtcWeight, "vsr.decodeCtcWeight");
  if (vsr.abmDepth < 0) throw ConfigError("vsr.abmDepth must be >= 0");
  vsr.abm.validate();
  memory.train.validate();
  vsr.train.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (corpusDir.empty()) throw ConfigError("paths.corpus must not be empty");
  if (outDir.empty()) throw ConfigError("paths.out must not be empty");
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"corpus", to_json(c.corpus)},
          {"data", {{"nTrain", c.data.nTrain}, {"nTest", c.data.nTest}, {"nQuantfit", c.data.nQuantfit}}},
          {"clusters", c.clusters},
          {"kmeansIter", c.kmeansIter},
          {"memoryDim", c.memoryDim},
          {"memory",
           {{"context", stack_json(c.memory.context)},
            {"decoder", stack_json(c.memory.decoder)},
            {"decodeCtcWeight", c.memory.decodeCtcWeight},
            {"train", train_json(c.memory.train)}}},
          {"vsr",
           {{"abmDepth", c.vsr.abmDepth},
            {"dk", c.vsr.abm.dk},
            {"dv", c.vsr.abm.dv},
            {"heads", c.vsr.abm.heads},
            {"tau", c.vsr.abm.tau},
            {"visual", stack_json(c.vsr.visual)},
            {"decoder", stack_json(c.vsr.decoder)},
            {"unfreezeMemory", c.vsr.unfreezeMemory},
            {"decodeCtcWeight", c.vsr.decodeCtcWeight},
            {"baseline", c.baseline},
            {"train", train_json(c.vsr.train)}}},
          {"seed", c.seed},
          {"seeds", c.seeds},
          {"paths", {{"corpus", c.corpusDir}, {"out", c.outDir}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  only(j, "config",
       {"corpus", "data", "clusters", "kmeansIter", "memoryDim", "memory", "vsr", "seed", "seeds", "paths"});
  RunConfig c;
  if (j.contains("corpus")) c.corpus = corpus_config_from_json(j["corpus"]);
  if (j.contains("data")) {
    const auto& d = j["data"];
    only(d, "data", {"nTrain", "nTest", "nQuantfit"});
    read(d, "data", "nTrain", c.data.nTrain);
    read(d, "data", "nTest", c.data.nTest);
    read(d, "data", "nQuantfit", c.data.nQuantfit);
  }
  read(j, "config", "clusters", c.clusters);
  read(j, "config", "kmeansIter", c.kmeansIter);
  read(j, "config", "memoryDim", c.memoryDim);
  if (j.contains("memory")) {
    const auto& m = j["memory"];
    only(m, "memory", {"context", "decoder", "decodeCtcWeight", "train"});
    if (m.contains("context")) stack_from(m["context"], "memory.context", c.memory.context);
    if (m.contains("decoder")) stack_from(m["decoder"], "memory.decoder", c.memory.decoder);
    read(m, "memory", "decodeCtcWeight", c.memory.decodeCtcWeight);
    if (m.contains("train")) train_from(m["train"], "memory.train", c.memory.train);
  }
  if (j.contains("vsr")) {
    const auto& v = j["vsr"];
    only(v, "vsr",
         {"abmDepth", "dk", "dv", "heads", "tau", "visual", "decoder", "unfreezeMemory", "decodeCtcWeight", "baseline",
          "train"});
    read(v, "vsr", "abmDepth", c.vsr.abmDepth);
    read(v, "vsr", "dk", c.vsr.abm.dk);
    read(v, "vsr", "dv", c.vsr.abm.dv);
    read(v, "vsr", "heads", c.vsr.abm.heads);
    read(v, "vsr", "tau", c.vsr.abm.tau);
    if (v.contains("visual")) stack_from(v["visual"], "vsr.visual", c.vsr.visual);
    if (v.contains("decoder")) stack_from(v["decoder"], "vsr.decoder", c.vsr.decoder);
    read(v, "vsr", "unfreezeMemory", c.vsr.unfreezeMemory);
    read(v, "vsr", "decodeCtcWeight", c.vsr.decodeCtcWeight);
    read(v, "vsr", "baseline", c.baseline);
    if (v.contains("train")) train_from(v["train"], "vsr.train", c.vsr.train);
  }
  read(j, "config", "seed", c.seed);
  read(j, "config", "seeds", c.seeds);
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    only(p, "paths", {"corpus", "out"});
    read(p, "paths", "corpus", c.corpusDir);
    read(p, "paths", "out", c.outDir);
  }
  c.sync();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

Corpus generate_run_corpus(const RunConfig& config) {
  return generate_corpus(config.corpus, config.data.nTrain, config.data.nTest, config.data.nQuantfit);
}

ClusterModel fit_quantizer_stage(const RunConfig& config, const Corpus& corpus, std::uint64_t seed) {
  return fit_kmeans(stack_audio(corpus.quantfit), config.clusters, config.kmeansIter, seed);
}

MemoryAsrResult train_memory_stage(const RunConfig& config, const Corpus& corpus, const ClusterModel& clusters,
                                   std::uint64_t seed, std::ostream* stepLog) {
  MemoryAsrConfig m = config.memory;
  m.train.seed = seed;
  return train_memory_asr(corpus, clusters, m, stepLog);
}

VsrResult train_vsr_stage(const RunConfig& config, const Corpus& corpus, const CompactAudioMemory& memory, int depth,
                          std::uint64_t seed, std::ostream* stepLog) {
  VsrConfig v = config.vsr;
  v.abmDepth = depth;
  v.train.seed = seed;
  return train_vsr(corpus, depth == 0 ? CompactAudioMemory{} : memory, v, stepLog);
}

namespace {

// Where files live does not change what was trained.
nlohmann::json run_snapshot(const RunConfig& config) {
  nlohmann::json j = to_json(config);
  j.erase("paths");
  return j;
}

}  // namespace

Checkpoint memory_checkpoint(const RunConfig& config, const MemoryAsrModel& model) {
  return checkpoint_of(model.params(), {{"stage", "train-memory"}, {"run", run_snapshot(config)}});
}

CompactAudioMemory memory_from_checkpoint(const Checkpoint& ckpt) {
  auto it = ckpt.tensors.find("memory.slots");
  if (it == ckpt.tensors.end() || it->second.rank() != 2) throw IntegrityError("checkpoint: no memory.slots matrix");
  return {Var::leaf(it->second, true), false};
}

Checkpoint vsr_checkpoint(const RunConfig& config, const VsrModel& model, int depth) {
  return checkpoint_of(model.checkpoint_tensors(),
                       {{"stage", "train-vsr"}, {"abmDepth", depth}, {"run", run_snapshot(config)}});
}

namespace {

RunConfig stored_run(const Checkpoint& ckpt, const char* stage) {
  if (!ckpt.config.contains("stage") || ckpt.config["stage"] != stage || !ckpt.config.contains("run"))
    throw IntegrityError(std::string("checkpoint is not a ") + stage + " checkpoint");
  try {
    return run_config_from_json(ckpt.config["run"]);
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint run config: ") + e.what());
  }
}

void load_into(const ParamSet& ps, const Checkpoint& ckpt) {
  try {
    ParamSet(ps).load(ckpt.tensors);
  } catch (const Error& e) {
    throw IntegrityError(e.what());
  }
}

}  // namespace

MemoryAsrModel memory_model_from_checkpoint(const Checkpoint& ckpt, int phonemes) {
  const RunConfig run = stored_run(ckpt, "train-memory");
  const CompactAudioMemory mem = memory_from_checkpoint(ckpt);
  auto model = MemoryAsrModel::make(run.memory, static_cast<int>(mem.size()), phonemes, run.seed);
  load_into(model.params(), ckpt);
  return model;
}

VsrModel vsr_model_from_checkpoint(const Checkpoint& ckpt, int visualDim, int phonemes) {
  const RunConfig run = stored_run(ckpt, "train-vsr");
  VsrConfig v = run.vsr;
  v.abmDepth = ckpt.config.value("abmDepth", run.vsr.abmDepth);
  CompactAudioMemory mem;
  if (ckpt.tensors.count("memory.slots")) mem = memory_from_checkpoint(ckpt);
  if (v.abmDepth > 0 && !mem.slots) throw IntegrityError("checkpoint: ABM model without memory.slots");
  auto model = VsrModel::make(v, visualDim, phonemes, mem, run.seed);
  load_into(model.checkpoint_tensors(), ckpt);
  return model;
}

nlohmann::json PipelineReport::to_json() const {
  return {{"asr_wer", opt(asrWer)},
          {"vsr_wer_baseline", opt(vsrWerBaseline)},
          {"vsr_wer_abm", opt(vsrWerAbm)},
          {"purity", opt(purity)},
          {"speaker_nmi", opt(speakerNmi)}};
}

PipelineReport run_pipeline(const RunConfig& config, const Corpus& corpus, const std::filesystem::path& outDir,
                            std::ostream* progress) {
  config.validate();
  std::filesystem::create_directories(outDir);
  PipelineReport report;
  const int depth = config.vsr.abmDepth;
  CompactAudioMemory memory;

  if (depth > 0) {
    const ClusterModel km = staged("fit-quantizer", progress, [&] {
      auto m = fit_quantizer_stage(config, corpus, config.seed);
      save_checkpoint(outDir / "quantizer.ckpt.json", cluster_checkpoint(m));
      return m;
    });
    const auto dis = purity_and_leakage(km, corpus.test);
    report.purity = dis.phonemePurity;
    report.speakerNmi = dis.speakerNMI;

    report.asrWer = staged("train-memory", progress, [&] {
      std::ofstream log(outDir / "memory.log.jsonl", std::ios::binary);
      auto r = train_memory_stage(config, corpus, km, config.seed, &log);
      save_checkpoint(outDir / "memory.ckpt.json", memory_checkpoint(config, r.model));
      return r.heldOutWer;
    });
    // Stage 2 reads the memory back from disk rather than reusing it in memory.
    memory = staged("train-vsr", progress, [&] { return memory_from_checkpoint(load_checkpoint(outDir / "memory.ckpt.json")); });
    report.vsrWerAbm = staged("train-vsr", progress, [&] {
      std::ofstream log(outDir / "vsr.log.jsonl", std::ios::binary);
      auto r = train_vsr_stage(config, corpus, memory, depth, config.seed, &log);
      save_checkpoint(outDir / "vsr.ckpt.json", vsr_checkpoint(config, r.model, depth));
      return r.testWer;
    });
  }
  if (depth == 0 || config.baseline) {
    report.vsrWerBaseline = staged("train-vsr", progress, [&] {
      std::ofstream log(outDir / "vsr_baseline.log.jsonl", std::ios::binary);
      auto r = train_vsr_stage(config, corpus, memory, 0, config.seed, &log);
      save_checkpoint(outDir / "vsr_baseline.ckpt.json", vsr_checkpoint(config, r.model, 0));
      return r.testWer;
    });
  }
  staged("eval", progress, [&] {
    write_text(outDir / "report.json", report.to_json().dump(2) + "\n");
    return 0;
  });
  return report;
}

RunConfig with_axis_value(const RunConfig& base, AblationAxis axis, int value) {
  RunConfig c = base;
  switch (axis) {
    case AblationAxis::Clusters: c.clusters = value; break;
    case AblationAxis::AbmDepth: c.vsr.abmDepth = value; break;
    case AblationAxis::MemoryDim: c.memoryDim = value; break;
  }
  c.sync();
  return c;
}

AblationResult run_ablation(AblationAxis axis, const std::vector<int>& values, const std::vector<std::uint64_t>& seeds,
                            const RunConfig& base, const Corpus& corpus, std::ostream* progress) {
  if (values.size() < 2) throw ConfigError("ablation needs at least 2 values");
  if (seeds.size() < 3) throw ConfigError("ablation needs at least 3 seeds");
  for (int v : values) {
    try {
      with_axis_value(base, axis, v).validate();
    } catch (const ConfigError& e) {
      throw ConfigError(axis_name(axis) + "=" + std::to_string(v) + ": " + e.what());
    }
  }

  AblationResult result;
  result.axis = axis;
  result.values.assign(values.begin(), values.end());
  auto note = [&](int v, std::uint64_t s, double w) {
    if (progress) *progress << "[ablate] " << axis_name(axis) << "=" << v << " seed=" << s << " wer=" << w << "\n"
                            << std::flush;
  };

  if (axis == AblationAxis::AbmDepth) {
    const bool needMemory = std::any_of(values.begin(), values.end(), [](int v) { return v > 0; });
    for (std::uint64_t s : seeds) {
      AblationRow withMemory{0, s, 0.0};
      CompactAudioMemory memory;
      if (needMemory) {
        const auto km = fit_quantizer_stage(base, corpus, s);
        const auto dis = purity_and_leakage(km, corpus.test);
        auto r = train_memory_stage(base, corpus, km, s);
        withMemory.asrWer = r.heldOutWer;
        withMemory.purity = dis.phonemePurity;
        withMemory.speakerNmi = dis.speakerNMI;
        memory = r.model.memory;
      }
      for (int v : values) {
        AblationRow row = v > 0 ? withMemory : AblationRow{0, s, 0.0};
        row.axisValue = static_cast<double>(v);
        row.seed = s;
        row.wer = train_vsr_stage(base, corpus, memory, v, s).testWer;
        note(v, s, row.wer);
        result.rows.push_back(row);
      }
    }
    std::stable_sort(result.rows.begin(), result.rows.end(), [&](const AblationRow& a, const AblationRow& b) {
      const auto ia = std::find(values.begin(), values.end(), a.axisValue) - values.begin();
      const auto ib = std::find(values.begin(), values.end(), b.axisValue) - values.begin();
      return ia < ib;
    });
    return result;
  }

  for (int v : values) {
    const RunConfig c = with_axis_value(base, axis, v);
    for (std::uint64_t s : seeds) {
      const auto km = fit_quantizer_stage(c, corpus, s);
      const auto dis = purity_and_leakage(km, corpus.test);
      auto mem = train_memory_stage(c, corpus, km, s);
      AblationRow row{static_cast<double>(v), s, 0.0, mem.heldOutWer, dis.phonemePurity, dis.speakerNMI};
      row.wer = c.vsr.abmDepth > 0 ? train_vsr_stage(c, corpus, mem.model.memory, c.vsr.abmDepth, s).testWer
                                   : train_vsr_stage(c, corpus, {}, 0, s).testWer;
      note(v, s, row.wer);
      result.rows.push_back(row);
    }
  }
  return result;
}

}  // namespace akvsr
