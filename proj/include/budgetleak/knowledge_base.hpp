// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "budgetleak/embedding.hpp"

namespace budgetleak::rag {

/// One knowledge-base entry and the unit of membership.
struct QaRecord {
  std::string id;
  std::string question;
  std::string answer;
  std::string text;

  friend bool operator==(const QaRecord&, const QaRecord&) = default;
};

/// Reads a JSONL corpus: one object per line with keys id, question, answer
/// and optionally text (defaults to "question answer"). Blank lines are
/// skipped; duplicate ids and malformed lines are errors.
std::vector<QaRecord> load_corpus(const std::filesystem::path& path);
std::vector<QaRecord> parse_corpus(std::string_view jsonl);
void save_corpus(const std::filesystem::path& path, std::span<const QaRecord> records);

/// The external knowledge base D: records plus one embedding per record from a
/// fixed embedder. Immutable once built; safe to share across threads.
class KnowledgeBase {
 public:
  KnowledgeBase(std::vector<QaRecord> records, std::shared_ptr<const Embedder> embedder);

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::span<const QaRecord> records() const noexcept { return records_; }
  const QaRecord& record(std::size_t i) const { return records_[i]; }
  /// Index of the record with `id`, or npos.
  std::size_t find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != npos; }

  const Embedder& embedder() const noexcept { return *embedder_; }
  const std::string& embedder_id() const noexcept { return embedder_id_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> embedding(std::size_t i) const {
    return std::span<const double>(matrix_).subspan(i * dim_, dim_);
  }
  std::span<const double> matrix() const noexcept { return matrix_; }
  std::span<const double> norms() const noexcept { return norms_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<QaRecord> records_;
  std::shared_ptr<const Embedder> embedder_;
  std::string embedder_id_;
  std::size_t dim_ = 0;
  std::vector<double> matrix_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Indices of the top-k records by descending cosine to the query embedding;
/// ties broken by ascending record id. Throws on an empty KB or k == 0.
std::vector<std::size_t> rank(std::string_view query, const KnowledgeBase& kb, std::size_t k);

std::vector<QaRecord> retrieve(std::string_view query, const KnowledgeBase& kb, std::size_t k);

/// Diagnostic retriever: the target record first (when present in the KB),
/// the remaining k-1 slots from `retrieve` with the target excluded.
std::vector<QaRecord> retrieve_ideal(const QaRecord& target, const KnowledgeBase& kb, std::size_t k);

/// The RAG system prompt. Context items are joined by newlines in retrieval
/// order. Byte-stable: it feeds the response-cache key.
std::string build_prompt(std::span<const std::string> context, std::string_view user_input);

/// Renders a per-corpus user-input template. Placeholders: {question}, and
/// {text_prefix} (the first 10 tokens of the record text).
std::string render_user_input(std::string_view tmpl, const QaRecord& record);

inline constexpr std::string_view kDefaultUserInput = "{question}";
inline constexpr std::string_view kSentenceCompletionUserInput =
    "Complete this sentence {text_prefix} based on the context";

}  // namespace budgetleak::rag
