// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "budgetleak/knowledge_base.hpp"

namespace budgetleak::eval {

struct PartitionSizes {
  std::size_t target_kb = 8000;
  std::size_t shadow_kb = 8000;
  std::size_t t_in = 1000;
  std::size_t t_out = 1000;
  std::size_t s_in = 1000;
  std::size_t s_out = 1000;

  void validate() const;
  std::size_t required() const noexcept { return target_kb + shadow_kb + t_out + s_out; }
};

/// Record ids for every subset of the experiment.
struct Partition {
  std::vector<std::string> target_kb;
  std::vector<std::string> shadow_kb;
  std::vector<std::string> t_in;
  std::vector<std::string> t_out;
  std::vector<std::string> s_in;
  std::vector<std::string> s_out;
  std::uint64_t seed = 0;
  std::size_t min_tokens = 0;

  /// Disjointness and subset relations; throws on violation.
  void validate() const;

  nlohmann::json to_json() const;
  static Partition from_json(const nlohmann::json& doc);

  friend bool operator==(const Partition&, const Partition&) = default;
};

/// Filters records with fewer than `min_tokens` tokens in `text`, shuffles the
/// rest with `seed`, and carves the subsets: target KB, shadow KB, then t_in
/// and s_in from inside the KBs, then t_out and s_out from the remainder.
Partition partition(std::span<const rag::QaRecord> corpus, const PartitionSizes& sizes, std::size_t min_tokens,
                    std::uint64_t seed);

/// Records selected by id, in id-list order.
std::vector<rag::QaRecord> select(std::span<const rag::QaRecord> corpus, std::span<const std::string> ids);

/// P(score_member > score_nonmember) + 0.5 P(tie), via average ranks.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predicts member when score >= threshold
};

/// One point per distinct score (descending), preceded by (0,0) at +inf.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(std::span<const RocPoint> curve);

/// (TPR + TNR) / 2.
double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels);

/// TPR at the smallest threshold whose empirical FPR is <= target_fpr.
double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double target_fpr = 0.001);

struct EvalReport {
  std::string mode;
  double auc = 0.0;
  double balanced_accuracy = 0.0;
  double tpr_at_fpr = 0.0;
  double target_fpr = 0.001;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  std::string fingerprint;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
  static std::string csv_header();
  std::string csv_row() const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate(std::string mode, std::span<const double> scores, std::span<const int> predictions,
                    std::span<const int> labels, double target_fpr, std::string fingerprint);

/// Two-column fpr,tpr CSV preceded by a "# fingerprint: ..." comment line.
void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> curve, std::string_view fingerprint);

}  // namespace budgetleak::eval
