// tools/akvsr_cli.cpp
//
// akvsr <command> [options]; see --help. Exit codes: 0 ok, 1 stage failure,
// 2 config error, 3 integrity error.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "akvsr/checkpoint.hpp"
#include "akvsr/gradsuite.hpp"
#include "akvsr/pipeline.hpp"

using namespace akvsr;

namespace {

constexpr int kOk = 0, kStageFailure = 1, kConfigError = 2, kIntegrityError = 3;

struct Common {
  std::string config;
  std::string corpus;
};

RunConfig resolve_config(const Common& common) {
  RunConfig c = common.config.empty() ? RunConfig{} : load_run_config(common.config);
  if (const char* env = std::getenv("AKVSR_SEED")) {
    char* end = nullptr;
    const unsigned long long s = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError(std::string("AKVSR_SEED is not an unsigned integer: ") + env);
    c.set_seed(s);
  }
  if (!common.corpus.empty()) c.corpusDir = common.corpus;
  c.sync();
  c.validate();
  return c;
}

Corpus load_corpus_for(const RunConfig& c) {
  try {
    return read_corpus(c.corpusDir);
  } catch (const IntegrityError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("corpus", e.what());
  }
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& item : split_csv(s)) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || (std::is_unsigned_v<T> && v < 0))
      throw ConfigError(std::string(what) + ": bad entry '" + item + "'");
    out.push_back(static_cast<T>(v));
  }
  return out;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config, "Run config JSON (defaults when omitted)");
  cmd->add_option("--corpus", common.corpus, "Corpus directory (overrides paths.corpus)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-memory visual speech recognition on synthetic data"};
  app.require_subcommand(1);
  Common common;

  std::string outDir;
  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic corpus");
  add_common(gen, common);
  gen->add_option("-o,--out", outDir, "Output directory (overrides paths.corpus)");

  std::string outFile;
  int clustersFlag = 0;
  auto* fitq = app.add_subcommand("fit-quantizer", "Fit k-means on the single-speaker split");
  add_common(fitq, common);
  fitq->add_option("-o,--out", outFile, "Cluster checkpoint to write")->required();
  fitq->add_option("-N,--clusters", clustersFlag, "Number of clusters (overrides config)");

  std::string quantizerFile, logFile;
  auto* trm = app.add_subcommand("train-memory", "Stage 1: train the audio memory through ASR");
  add_common(trm, common);
  trm->add_option("-q,--quantizer", quantizerFile, "Cluster checkpoint")->required();
  trm->add_option("-o,--out", outFile, "Memory checkpoint to write")->required();
  trm->add_option("--log", logFile, "JSONL step log");

  std::string memoryFile;
  int abmDepth = -1;
  bool unfreeze = false;
  auto* trv = app.add_subcommand("train-vsr", "Stage 2: train lip reading with the frozen memory");
  add_common(trv, common);
  trv->add_option("-m,--memory", memoryFile, "Memory checkpoint (not needed for --abm-depth 0)");
  trv->add_option("-o,--out", outFile, "VSR checkpoint to write")->required();
  trv->add_option("--log", logFile, "JSONL step log");
  trv->add_option("--abm-depth", abmDepth, "Bridging layers (overrides config)")->check(CLI::NonNegativeNumber);
  trv->add_flag("--unfreeze-memory", unfreeze, "Let stage 2 update the memory slots");

  std::string modelFile, split = "test";
  auto* ev = app.add_subcommand("eval", "Greedy-decode WER of a checkpoint on a split");
  add_common(ev, common);
  ev->add_option("--model", modelFile, "train-vsr or train-memory checkpoint")->required();
  ev->add_option("-q,--quantizer", quantizerFile, "Cluster checkpoint (train-memory models)");
  ev->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));

  std::string axisName, valuesCsv, seedsCsv;
  auto* abl = app.add_subcommand("ablate", "Sweep one axis over values x seeds and write CSV");
  add_common(abl, common);
  abl->add_option("--axis", axisName, "clusters | abmDepth | memoryDim")->required();
  abl->add_option("--values", valuesCsv, "Comma-separated axis values")->required();
  abl->add_option("--seeds", seedsCsv, "Comma-separated seeds (default: config seeds)");
  abl->add_option("-o,--out", outFile, "CSV file (stdout when omitted)");

  int trials = 20;
  std::string mutate;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient rule");
  gc->add_option("--trials", trials, "Random instances per op (modules use a tenth)")->check(CLI::PositiveNumber);
  gc->add_option("--mutate", mutate, "Sign-flip the gradient of one entry (mutation test)");
  bool listOps = false;
  gc->add_flag("--list", listOps, "List entry names and exit");

  bool genFirst = false;
  auto* pipe = app.add_subcommand("pipeline", "fit-quantizer -> train-memory -> train-vsr -> eval");
  add_common(pipe, common);
  pipe->add_option("-o,--out", outDir, "Output directory (overrides paths.out)");
  pipe->add_option("--abm-depth", abmDepth, "Bridging layers (overrides config)")->check(CLI::NonNegativeNumber);
  pipe->add_flag("--unfreeze-memory", unfreeze, "Let stage 2 update the memory slots");
  pipe->add_flag("--gen-corpus", genFirst, "Generate the corpus first when it is missing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (gc->parsed()) {
      if (listOps) {
        for (const auto& n : gradcheck_suite_names()) std::cout << n << "\n";
        return kOk;
      }
      if (!mutate.empty()) {
        const auto names = gradcheck_suite_names();
        if (std::find(names.begin(), names.end(), mutate) == names.end())
          throw ConfigError("--mutate: unknown entry " + mutate + " (see --list)");
      }
      bool ok = true;
      for (const auto& e : run_gradcheck_suite(trials, mutate)) {
        std::cout << std::left << std::setw(22) << e.name << (e.pass ? "ok  " : "FAIL") << "  max_rel_error "
                  << std::scientific << std::setprecision(3) << e.maxRelError << "  tol " << e.tolerance << "  trials "
                  << std::defaultfloat << e.trials << "\n";
        if (!e.pass) std::cout << "    " << e.failure << "\n";
        ok = ok && e.pass;
      }
      return ok ? kOk : kStageFailure;
    }

    RunConfig cfg = resolve_config(common);

    if (gen->parsed()) {
      if (!outDir.empty()) cfg.corpusDir = outDir;
      const Corpus corpus = generate_run_corpus(cfg);
      write_corpus(cfg.corpusDir, corpus);
      std::cout << "train " << corpus.train.size() << "\ntest " << corpus.test.size() << "\nquantfit "
                << corpus.quantfit.size() << "\n";
      return kOk;
    }

    if (fitq->parsed()) {
      if (clustersFlag > 0) cfg.clusters = clustersFlag;
      cfg.validate();
      const Corpus corpus = load_corpus_for(cfg);
      const auto km = fit_quantizer_stage(cfg, corpus, cfg.seed);
      save_checkpoint(outFile, cluster_checkpoint(km));
      const auto dis = purity_and_leakage(km, corpus.test);
      std::cout << nlohmann::json{{"clusters", km.clusters()},
                                  {"inertia", km.inertia},
                                  {"purity", dis.phonemePurity},
                                  {"speaker_nmi", dis.speakerNMI}}
                       .dump()
                << "\n";
      return kOk;
    }

    if (trm->parsed()) {
      const ClusterModel km = cluster_model_from(load_checkpoint(quantizerFile));
      cfg.clusters = static_cast<int>(km.clusters());
      const Corpus corpus = load_corpus_for(cfg);
      std::ofstream log;
      if (!logFile.empty()) log.open(logFile, std::ios::binary);
      auto r = train_memory_stage(cfg, corpus, km, cfg.seed, logFile.empty() ? nullptr : &log);
      save_checkpoint(outFile, memory_checkpoint(cfg, r.model));
      std::cout << nlohmann::json{{"asr_wer", r.heldOutWer}}.dump() << "\n";
      return kOk;
    }

    if (trv->parsed()) {
      if (abmDepth >= 0) cfg.vsr.abmDepth = abmDepth;
      if (unfreeze) cfg.vsr.unfreezeMemory = true;
      cfg.validate();
      CompactAudioMemory memory;
      if (cfg.vsr.abmDepth > 0) {
        if (memoryFile.empty()) throw ConfigError("train-vsr: --memory is required when abm depth > 0");
        memory = memory_from_checkpoint(load_checkpoint(memoryFile));
      }
      const Corpus corpus = load_corpus_for(cfg);
      std::ofstream log;
      if (!logFile.empty()) log.open(logFile, std::ios::binary);
      auto r = train_vsr_stage(cfg, corpus, memory, cfg.vsr.abmDepth, cfg.seed, logFile.empty() ? nullptr : &log);
      save_checkpoint(outFile, vsr_checkpoint(cfg, r.model, cfg.vsr.abmDepth));
      std::cout << nlohmann::json{{"vsr_wer", r.testWer}, {"abm_depth", cfg.vsr.abmDepth}}.dump() << "\n";
      return kOk;
    }

    if (ev->parsed()) {
      const Corpus corpus = load_corpus_for(cfg);
      const auto& samples = split == "train" ? corpus.train : corpus.test;
      const Checkpoint ckpt = load_checkpoint(modelFile);
      const std::string stage = ckpt.config.value("stage", "");
      double w = 0.0;
      if (stage == "train-vsr") {
        const auto model = vsr_model_from_checkpoint(ckpt, corpus.config.d, corpus.config.P);
        w = evaluate_vsr(model, samples, cfg.vsr.train.maxDecodeLen);
      } else if (stage == "train-memory") {
        if (quantizerFile.empty()) throw ConfigError("eval: a train-memory model needs --quantizer");
        const auto km = cluster_model_from(load_checkpoint(quantizerFile));
        const auto model = memory_model_from_checkpoint(ckpt, corpus.config.P);
        w = evaluate_memory_asr(model, km, samples, cfg.memory.train.maxDecodeLen);
      } else {
        throw IntegrityError("eval: checkpoint has no recognised stage");
      }
      std::cout << nlohmann::json{{"split", split}, {"wer", w}}.dump() << "\n";
      return kOk;
    }

    if (abl->parsed()) {
      const AblationAxis axis = parse_axis(axisName);
      const auto values = parse_list<int>(valuesCsv, "--values");
      const auto seeds = seedsCsv.empty() ? cfg.seeds : parse_list<std::uint64_t>(seedsCsv, "--seeds");
      const Corpus corpus = load_corpus_for(cfg);
      const auto result = run_ablation(axis, values, seeds, cfg, corpus, &std::cerr);
      if (outFile.empty()) {
        result.write_csv(std::cout);
      } else {
        std::ofstream out(outFile, std::ios::binary);
        if (!out) throw FileError("cannot write " + outFile);
        result.write_csv(out);
      }
      for (const auto& s : result.summarize())
        std::cerr << axis_name(axis) << "=" << s.axisValue << " wer " << s.meanWer << " +- " << s.stdWer << " ("
                  << s.runs << " runs)\n";
      return kOk;
    }

    if (pipe->parsed()) {
      if (!outDir.empty()) cfg.outDir = outDir;
      if (abmDepth >= 0) cfg.vsr.abmDepth = abmDepth;
      if (unfreeze) cfg.vsr.unfreezeMemory = true;
      cfg.validate();
      if (genFirst && !std::filesystem::exists(std::filesystem::path(cfg.corpusDir) / "corpus.json"))
        write_corpus(cfg.corpusDir, generate_run_corpus(cfg));
      const Corpus corpus = load_corpus_for(cfg);
      const auto report = run_pipeline(cfg, corpus, cfg.outDir, &std::cerr);
      std::cout << report.to_json().dump(2) << "\n";
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kIntegrityError;
  } catch (const StageError& e) {
    std::cerr << "stage " << e.stage() << " failed: " << e.what() << "\n";
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  }
  return kStageFailure;
}
