// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "budgetleak/generator.hpp"
#include "budgetleak/knowledge_base.hpp"
#include "budgetleak/text_metrics.hpp"

namespace budgetleak::probing {

using metrics::MetricId;

enum class ScheduleKind { Sweep, Tri, Bi, Custom };
enum class BiVariant { MinMean, MinMax, MeanMax };

std::string_view to_string(ScheduleKind kind);
std::string_view to_string(BiVariant variant);
std::optional<BiVariant> parse_bi_variant(std::string_view name);

/// Strictly increasing positive generation budgets; the sequence axis.
struct BudgetSchedule {
  std::vector<int> budgets;
  ScheduleKind kind = ScheduleKind::Custom;

  std::size_t size() const noexcept { return budgets.size(); }
  void validate() const;
};

BudgetSchedule schedule_sweep(int start = 10, int end = 270, int step = 20);
/// [10, mean, 2 * mean]; mean must exceed 10.
BudgetSchedule schedule_tri(int mean_answer_tokens);
/// Two-element subsets of the tri-budget schedule.
BudgetSchedule schedule_bi(int mean_answer_tokens, BiVariant variant);
BudgetSchedule schedule_custom(std::vector<int> budgets);

/// Mean answer length in tokens, rounded to the nearest integer.
int mean_answer_tokens(std::span<const rag::QaRecord> records);

/// m x n matrix of metric values (rows) over ascending budgets (columns).
struct MultiMetricSequence {
  std::string sample_id;
  std::vector<MetricId> metric_names;
  std::vector<int> budgets;
  std::vector<double> values;  // row-major, metric_names.size() x budgets.size()
  std::optional<int> label;    // 1 = member, 0 = non-member, when known

  std::size_t rows() const noexcept { return metric_names.size(); }
  std::size_t cols() const noexcept { return budgets.size(); }
  double at(std::size_t metric, std::size_t budget) const { return values[metric * cols() + budget]; }
  std::span<const double> row(std::size_t metric) const {
    return std::span<const double>(values).subspan(metric * cols(), cols());
  }
  std::optional<std::size_t> metric_index(MetricId id) const;
  /// Shape, strictly increasing budgets, and every value inside its metric range.
  void validate() const;

  friend bool operator==(const MultiMetricSequence&, const MultiMetricSequence&) = default;
};

/// [semantic row || lexical row], length 2n.
struct FeatureVector {
  std::string sample_id;
  std::vector<double> values;
};

FeatureVector to_feature_vector(const MultiMetricSequence& seq, MetricId semantic = MetricId::Cosine,
                                MetricId lexical = MetricId::Rouge1);

/// diffs[i] = row[i+1] - row[i]. Requires n >= 2.
std::vector<double> rate_of_change(std::span<const double> row);
/// Sum of |diffs|. Requires n >= 2.
double cumulative_fluctuation(std::span<const double> row);
/// m x m Pearson correlation between metric rows across the budget axis,
/// row-major. A zero-variance row correlates 0 with everything, itself included.
std::vector<double> cross_metric_correlation(const MultiMetricSequence& seq);

/// A queryable RAG system: knowledge base + retriever settings + generator.
struct RagPipeline {
  std::shared_ptr<const rag::KnowledgeBase> kb;
  std::shared_ptr<rag::Generator> generator;
  std::size_t top_k = 4;
  bool ideal_retriever = false;
  std::string user_input_template = std::string(rag::kDefaultUserInput);
  rag::ResponseTransform transform;  // applied to every response when set

  /// Top-k retrieval for the target's query (or the ideal retriever).
  std::vector<std::string> context_for(const rag::QaRecord& target) const;
};

struct ProbeOptions {
  /// Queries per budget; metric values are averaged (for sampling backends).
  int repeats = 1;
  /// Once a budget reaches twice the answer length and the previous response
  /// ended before its cap, remaining budgets reuse that response instead of
  /// querying again (the output can no longer change under a deterministic
  /// backend).
  bool adaptive_stop = false;
  /// Worker threads for probe_many.
  std::size_t concurrency = 1;
};

/// Probes one target under every budget of the schedule and scores each
/// response against the target's ground-truth answer. Generation failures
/// raise ProbeError carrying the sample id and budget.
MultiMetricSequence probe(const rag::QaRecord& target, const RagPipeline& rag,
                          const BudgetSchedule& schedule, std::span<const MetricId> metric_set,
                          const Embedder& embedder, const ProbeOptions& options = {});

/// Probes many targets over a bounded worker pool of (sample, budget) tasks.
/// Samples whose probes fail are dropped (nullopt) with a logged warning.
/// Results keep target order whatever the completion order.
std::vector<std::optional<MultiMetricSequence>> probe_many(std::span<const rag::QaRecord> targets,
                                                           const RagPipeline& rag,
                                                           const BudgetSchedule& schedule,
                                                           std::span<const MetricId> metric_set,
                                                           const Embedder& embedder,
                                                           const ProbeOptions& options = {});

/// Sequence store: JSONL, one sequence per line with keys sample_id, budgets,
/// metric_names, values (row-major), label (int or null) and fingerprint.
void write_sequences(const std::filesystem::path& path, std::span<const MultiMetricSequence> seqs,
                     std::string_view fingerprint);
struct SequenceStore {
  std::vector<MultiMetricSequence> sequences;
  std::string fingerprint;
};
SequenceStore read_sequences(const std::filesystem::path& path);
std::string sequence_to_json_line(const MultiMetricSequence& seq, std::string_view fingerprint);
MultiMetricSequence sequence_from_json_line(std::string_view line, std::string* fingerprint = nullptr);

}  // namespace budgetleak::probing
