// sdtc: spoken-document topic classification from acoustic features,
// with CTC-trained feature extractors and local multi-head attention fusion.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>

#include "sdtc/checkpoint.hpp"
#include "sdtc/config.hpp"
#include "sdtc/corpus.hpp"
#include "sdtc/gradcheck.hpp"
#include "sdtc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sdtc;

namespace {

RunConfig load_config(const std::string& path, bool has_seed,
                      std::uint64_t seed) {
  std::vector<std::string> defaulted;
  RunConfig cfg = RunConfig::load(path, &defaulted);
  if (!defaulted.empty()) {
    std::cerr << "notice: using defaults for:";
    for (const auto& k : defaulted) std::cerr << ' ' << k;
    std::cerr << "\n";
  }
  if (has_seed) {
    cfg.train_seed = seed;
    cfg.model_seed = seed + 1;
  }
  return cfg;
}

std::string ckpt_path(const RunConfig& cfg, const std::string& stage) {
  return (fs::path(cfg.ckpt_dir) / (stage + ".ckpt")).string();
}

Checkpoint load_stage_ckpt(const RunConfig& cfg, const std::string& stage) {
  const std::string path = ckpt_path(cfg, stage);
  if (!fs::exists(path))
    throw std::runtime_error("missing prerequisite checkpoint '" + stage +
                             "' (expected at " + path + "); train that stage first");
  Checkpoint ck = load_checkpoint(path);
  if (ck.stage != stage)
    throw std::runtime_error("checkpoint " + path + " holds stage '" +
                             ck.stage + "', expected '" + stage + "'");
  return ck;
}

int cmd_gen(const RunConfig& cfg) {
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  save_corpus(corpus, cfg.data_dir);
  std::cout << "generated corpus in " << cfg.data_dir
            << ": train=" << corpus.train.size() << " dev=" << corpus.dev.size()
            << " test=" << corpus.test.size() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& stage,
              const std::string& variant_name) {
  const ModelConfig mc = ModelConfig::from(cfg);
  Pipeline pipe = Pipeline::create(mc);
  fs::create_directories(cfg.ckpt_dir);
  const auto train_docs = load_split(cfg.data_dir, "train");
  if (stage == "a2p") {
    TrainResult r = train_a2p(pipe, train_docs, std::cout);
    save_checkpoint(snapshot("a2p", cfg.to_lines(), r.epochs, r.final_loss,
                             cfg.train_seed, pipe.a2p.parameters()),
                    ckpt_path(cfg, "a2p"));
  } else if (stage == "p2w") {
    apply_checkpoint(load_stage_ckpt(cfg, "a2p"), pipe.a2p.parameters());
    TrainResult r = train_p2w(pipe, train_docs, std::cout);
    save_checkpoint(snapshot("p2w", cfg.to_lines(), r.epochs, r.final_loss,
                             cfg.train_seed, pipe.p2w.parameters()),
                    ckpt_path(cfg, "p2w"));
  } else if (stage == "fusion") {
    apply_checkpoint(load_stage_ckpt(cfg, "a2p"), pipe.a2p.parameters());
    apply_checkpoint(load_stage_ckpt(cfg, "p2w"), pipe.p2w.parameters());
    const SystemVariant variant = variant_from_string(variant_name);
    std::mt19937_64 rng(mc.model_seed + 17);
    FusionModel fusion = FusionModel::create(variant, mc, rng);
    const auto dev_docs = load_split(cfg.data_dir, "dev");
    TrainResult r = train_fusion(pipe, fusion, train_docs, dev_docs, std::cout);
    const std::string stage_tag = "fusion_" + to_string(variant);
    save_checkpoint(snapshot(stage_tag, cfg.to_lines(), r.epochs, r.final_loss,
                             cfg.train_seed, fusion.parameters()),
                    ckpt_path(cfg, stage_tag));
  } else {
    throw std::invalid_argument("unknown stage '" + stage +
                                "' (expected a2p|p2w|fusion)");
  }
  std::cout << "checkpoint written\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& variant_name,
             const std::string& split) {
  const ModelConfig mc = ModelConfig::from(cfg);
  Pipeline pipe = Pipeline::create(mc);
  apply_checkpoint(load_stage_ckpt(cfg, "a2p"), pipe.a2p.parameters());
  apply_checkpoint(load_stage_ckpt(cfg, "p2w"), pipe.p2w.parameters());
  const SystemVariant variant = variant_from_string(variant_name);
  std::mt19937_64 rng(mc.model_seed + 17);
  FusionModel fusion = FusionModel::create(variant, mc, rng);
  apply_checkpoint(load_stage_ckpt(cfg, "fusion_" + to_string(variant)),
                   fusion.parameters());
  const auto docs = load_split(cfg.data_dir, split);
  EvalResult r = evaluate(pipe, fusion, docs, std::cerr);
  std::cout << "variant=" << to_string(variant) << " split=" << split
            << " correct=" << r.correct << " total=" << r.total
            << " skipped=" << r.skipped << "\n";
  std::cout << "confusion (rows=truth, cols=predicted):\n";
  for (size_t i = 0; i < r.confusion.size(); ++i) {
    std::cout << "  topic" << i << ":";
    for (int c : r.confusion[i]) std::cout << ' ' << c;
    std::cout << "\n";
  }
  std::printf("ACC=%.4f\n", r.acc);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const GradCheckResult& r : run_gradcheck_suite(seed)) {
    std::printf("%-20s max_rel_err=%.3e %s\n", r.name.c_str(), r.max_rel_err,
                r.max_rel_err < 1e-4 ? "ok" : "FAIL");
    ok = ok && r.max_rel_err < 1e-4;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spoken-document topic classification pipeline"};
  app.require_subcommand(1);

  std::string config_path, stage = "a2p", variant = "lmha_add",
              split = "test";
  std::uint64_t seed = 0;
  bool has_seed = false;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", config_path, "config file path");
    if (need_config) opt->required();
    sub->add_option("--seed", seed, "override config seeds")
        ->each([&](const std::string&) { has_seed = true; });
  };

  auto* gen = app.add_subcommand("gen", "generate the synthetic corpus");
  add_common(gen, true);
  auto* train = app.add_subcommand("train", "train one pipeline stage");
  add_common(train, true);
  train->add_option("--stage", stage, "a2p|p2w|fusion")->required();
  train->add_option("--variant", variant,
                    "dafs|dlfs|conc|gmha_add|gmha_cat|lmha_add|lmha_cat");
  auto* eval = app.add_subcommand("eval", "evaluate a trained system");
  add_common(eval, true);
  eval->add_option("--variant", variant,
                   "dafs|dlfs|conc|gmha_add|gmha_cat|lmha_add|lmha_cat");
  eval->add_option("--split", split, "train|dev|test");
  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference gradient suite");
  add_common(gc, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gc->parsed()) return cmd_gradcheck(has_seed ? seed : 42);
    RunConfig cfg = load_config(config_path, has_seed, seed);
    if (has_seed && gen->parsed()) cfg.corpus_seed = seed;
    if (gen->parsed()) return cmd_gen(cfg);
    if (train->parsed()) return cmd_train(cfg, stage, variant);
    if (eval->parsed()) return cmd_eval(cfg, variant, split);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
