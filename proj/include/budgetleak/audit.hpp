// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

// End-to-end audit stages shared by the CLI and the acceptance suite. Every
// stage reads its upstream artifacts from `out_dir`, refuses artifacts whose
// fingerprint differs from the current configuration, and writes its own
// artifacts atomically.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "budgetleak/attention_lstm.hpp"
#include "budgetleak/evaluation.hpp"
#include "budgetleak/fcm.hpp"
#include "budgetleak/probing.hpp"
#include "budgetleak/synthetic.hpp"

namespace budgetleak::audit {

enum class Backend { Synthetic, Remote };
enum class Mode { P, Z };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

struct AuditConfig {
  // Corpus: a JSONL file, or a generated synthetic corpus when the path is empty.
  std::string corpus_path;
  rag::SyntheticCorpusConfig synthetic_corpus;

  eval::PartitionSizes partition;
  std::size_t min_tokens = 50;
  std::uint64_t seed = 1;

  // Retriever.
  std::string embedder = "hashed-bow";  // or "remote"
  std::size_t embedder_dim = 512;
  std::string embedder_url;
  std::string embedder_model;
  std::size_t top_k = 4;
  bool ideal_retriever = false;
  std::string user_input = std::string(rag::kDefaultUserInput);

  // Generator.
  Backend backend = Backend::Synthetic;
  rag::SyntheticGeneratorConfig synthetic;
  std::string remote_url;
  std::string remote_model;
  double temperature = 0.0;
  std::optional<double> top_p;
  int max_in_flight = 4;
  double timeout_s = 60.0;
  std::string cache_path;  // default: <out_dir>/cache.jsonl
  /// Serve every response from the cache; a miss is an error.
  bool replay_only = false;

  // Probing.
  std::string schedule = "sweep";  // sweep | tri | bi | custom
  int sweep_start = 10;
  int sweep_end = 270;
  int sweep_step = 20;
  probing::BiVariant bi_variant = probing::BiVariant::MinMean;
  std::vector<int> budgets;  // custom schedule
  std::vector<probing::MetricId> metrics;
  int repeats = 1;
  bool adaptive_stop = false;

  // Attack.
  Mode mode = Mode::P;
  attack::TrainConfig train;
  attack::FcmOptions fcm;
  probing::MetricId semantic_metric = probing::MetricId::Cosine;
  probing::MetricId lexical_metric = probing::MetricId::Rouge1;
  std::size_t knn_k = 5;
  double target_fpr = 0.001;

  // Runtime only; excluded from the fingerprint.
  std::filesystem::path out_dir = "budgetleak-out";
  std::size_t concurrency = 1;
  bool resume = false;

  AuditConfig();

  /// Small synthetic setup: 400/400 knowledge bases, 200/200 shadow training
  /// samples and 200/200 targets.
  static AuditConfig synthetic_demo();

  /// Parses a config document. Unknown keys and wrong types are errors.
  static AuditConfig from_json(const nlohmann::json& doc);
  static AuditConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  void validate() const;
  /// SHA-256 over the canonical JSON without runtime-only keys and the attack mode.
  std::string fingerprint() const;
  std::filesystem::path cache_file() const;
};

struct IngestSummary {
  std::size_t records = 0;
  std::size_t eligible = 0;  // at least min_tokens tokens
  double mean_tokens = 0.0;
  double mean_answer_tokens = 0.0;
  nlohmann::json to_json() const;
};

struct ProbeStats {
  std::string which;
  std::size_t targets = 0;
  std::size_t probed = 0;    // sequences in the store
  std::size_t dropped = 0;   // failed samples
  std::size_t resumed = 0;   // taken from a partial store
  std::uint64_t generator_calls = 0;
  std::uint64_t cache_hits = 0;
  nlohmann::json to_json(std::string_view fingerprint) const;
};

struct AttackScores {
  std::vector<std::string> sample_ids;
  std::vector<double> scores;
  std::vector<int> predictions;
  std::vector<int> labels;
  std::string fingerprint;
};

/// Corpus from the config (file or synthetic).
std::vector<rag::QaRecord> load_corpus(const AuditConfig& cfg);

IngestSummary cmd_ingest(const AuditConfig& cfg);
eval::Partition cmd_partition(const AuditConfig& cfg);
/// which = "target" or "shadow".
ProbeStats cmd_probe(const AuditConfig& cfg, std::string_view which);
attack::AttentionLstmClassifier cmd_train(const AuditConfig& cfg, attack::TrainReport* report = nullptr);
AttackScores cmd_attack(const AuditConfig& cfg);
eval::EvalReport cmd_eval(const AuditConfig& cfg);

struct DemoResult {
  eval::EvalReport p;
  eval::EvalReport z;
  ProbeStats target;
  ProbeStats shadow;
};
/// Partition, probe both sides, train, attack and evaluate in both modes.
DemoResult cmd_synth_demo(const AuditConfig& cfg);

/// Budget schedule for the config; tri and bi use the mean answer length of
/// the shadow knowledge base.
probing::BudgetSchedule schedule_for(const AuditConfig& cfg, std::span<const rag::QaRecord> shadow_kb);

// Artifact paths inside out_dir.
std::filesystem::path partition_file(const AuditConfig& cfg);
std::filesystem::path sequences_file(const AuditConfig& cfg, std::string_view which);
std::filesystem::path partial_sequences_file(const AuditConfig& cfg, std::string_view which);
std::filesystem::path probe_stats_file(const AuditConfig& cfg, std::string_view which);
std::filesystem::path model_file(const AuditConfig& cfg);
std::filesystem::path clustering_file(const AuditConfig& cfg);
std::filesystem::path scores_file(const AuditConfig& cfg);
std::filesystem::path report_file(const AuditConfig& cfg);
std::filesystem::path report_csv_file(const AuditConfig& cfg);
std::filesystem::path roc_file(const AuditConfig& cfg);

/// Scores CSV: "# fingerprint: F" then sample_id,score,prediction,label.
void write_scores(const std::filesystem::path& path, const AttackScores& scores);
AttackScores read_scores(const std::filesystem::path& path);

}  // namespace budgetleak::audit
