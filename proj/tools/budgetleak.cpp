// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

// budgetleak: membership-inference audit of a RAG system through its
// generation-budget side channel.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "budgetleak/audit.hpp"
#include "budgetleak/error.hpp"
#include "budgetleak/log.hpp"

namespace {

using budgetleak::audit::AuditConfig;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Audit configuration (JSON)");
  cmd->add_option("--out", f.out, "Output directory (overrides out_dir)");
  cmd->add_option("--seed", f.seed, "Global seed (overrides seed)");
  cmd->add_option("--concurrency", f.concurrency, "Probe worker threads (overrides concurrency)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--resume", f.resume, "Continue an interrupted probe run");
}

AuditConfig resolve(const CommonFlags& f, bool demo) {
  AuditConfig cfg = f.config.empty() ? (demo ? AuditConfig::synthetic_demo() : AuditConfig())
                                     : AuditConfig::load(f.config);
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.train.seed = *f.seed;
    cfg.fcm.seed = *f.seed;
  }
  if (f.concurrency) cfg.concurrency = *f.concurrency;
  if (f.resume) cfg.resume = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BudgetLeak membership-inference audit toolkit for RAG systems"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string corpus_file;
  std::string which;

  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and summarise token statistics");
  ingest->add_option("corpus", corpus_file, "Corpus JSONL (overrides corpus.path)");
  add_common(ingest, flags);

  auto* part = app.add_subcommand("partition", "Split the corpus into knowledge bases and probe sets");
  add_common(part, flags);

  auto* probe = app.add_subcommand("probe", "Probe the target or shadow RAG under the budget schedule");
  probe->add_option("which", which, "target or shadow")->required()->check(CLI::IsMember({"target", "shadow"}));
  add_common(probe, flags);

  auto* train = app.add_subcommand("train", "Train the sequence attack model on shadow sequences");
  add_common(train, flags);

  auto* attack = app.add_subcommand("attack", "Score target samples (mode from attack.mode)");
  std::string mode;
  attack->add_option("--mode", mode, "P or Z (overrides attack.mode)");
  add_common(attack, flags);

  auto* eval = app.add_subcommand("eval", "Compute AUC, balanced accuracy, TPR@FPR and the ROC curve");
  eval->add_option("--mode", mode, "P or Z (overrides attack.mode)");
  add_common(eval, flags);

  auto* demo = app.add_subcommand("synth-demo", "Run the full pipeline on the synthetic harness");
  add_common(demo, flags);

  auto* synth = app.add_subcommand("synth-corpus", "Write the synthetic corpus as JSONL");
  std::string synth_out;
  synth->add_option("path", synth_out, "Output JSONL")->required();
  add_common(synth, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    namespace a = budgetleak::audit;
    AuditConfig cfg = resolve(flags, demo->parsed());
    if (!mode.empty()) cfg.mode = a::parse_mode(mode);

    if (ingest->parsed()) {
      if (!corpus_file.empty()) cfg.corpus_path = corpus_file;
      a::cmd_ingest(cfg);
    } else if (part->parsed()) {
      a::cmd_partition(cfg);
    } else if (probe->parsed()) {
      a::cmd_probe(cfg, which);
    } else if (train->parsed()) {
      a::cmd_train(cfg);
    } else if (attack->parsed()) {
      a::cmd_attack(cfg);
    } else if (eval->parsed()) {
      a::cmd_eval(cfg);
    } else if (demo->parsed()) {
      a::cmd_synth_demo(cfg);
    } else if (synth->parsed()) {
      budgetleak::rag::save_corpus(synth_out, a::load_corpus(cfg));
    }
  } catch (const budgetleak::Error& e) {
    budgetleak::log::error("command_failed", {{"kind", budgetleak::to_string(e.kind())}, {"message", e.what()}});
    std::cerr << "budgetleak: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    budgetleak::log::error("command_failed", {{"message", e.what()}});
    std::cerr << "budgetleak: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
