// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "budgetleak/embedding.hpp"

namespace budgetleak::metrics {

/// Lowercase word tokens; never contains empty strings.
using TokenSequence = std::vector<std::string>;

enum class MetricId { Cosine, Rouge1, Rouge2, RougeL, Bleu, Edit };

std::string_view to_string(MetricId id);
std::optional<MetricId> parse_metric(std::string_view name);
/// Inclusive value range of a metric: [-1,1] for cosine, [0,1] otherwise.
std::pair<double, double> metric_range(MetricId id);
/// Every metric, in canonical order.
std::span<const MetricId> all_metrics();

struct MetricVector {
  std::vector<MetricId> names;
  std::vector<double> values;
};

/// Lowercases, turns punctuation and symbols into separators and splits on
/// whitespace. UTF-8 aware (see `fold_codepoint`).
TokenSequence tokenize(std::string_view text);

/// Number of tokens `tokenize` would produce, without materialising them.
std::size_t count_tokens(std::string_view text);

/// Longest prefix of `text` holding at most `max_tokens` tokens. The cut is
/// placed right after the last kept token.
std::string_view truncate_tokens(std::string_view text, std::size_t max_tokens);

/// Recall-oriented ROUGE-N: clipped n-gram overlap / reference n-gram count.
double rouge_n(const TokenSequence& candidate, const TokenSequence& reference, std::size_t n);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

/// ROUGE-L as the F1 of LCS precision and recall.
double rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

/// Sentence BLEU with brevity penalty. Zero precisions of order >= 2 are
/// replaced by 1 / (2 * candidate n-gram count); unigram precision is not
/// smoothed, so a total lexical miss scores 0.
double bleu(const TokenSequence& candidate, const TokenSequence& reference, std::size_t max_n = 4);

/// Levenshtein distance over Unicode code points.
std::size_t edit_distance(std::string_view candidate, std::string_view reference);

/// 1 - distance / max(length); 1 when both strings are empty.
double edit_similarity(std::string_view candidate, std::string_view reference);

/// Throws DimensionMismatch or ZeroVector errors.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

/// One value per requested metric, in request order.
MetricVector metric_vector(std::string_view candidate, std::string_view reference,
                           const Embedder& embedder, std::span<const MetricId> metric_set);

/// Same as `metric_vector`, with the reference's tokens and embedding precomputed.
struct ReferenceText {
  std::string text;
  TokenSequence tokens;
  std::optional<EmbeddingVector> embedding;
};
ReferenceText prepare_reference(std::string_view reference, const Embedder* embedder);
std::vector<double> score_against(std::string_view candidate, const ReferenceText& reference,
                                  const Embedder& embedder, std::span<const MetricId> metric_set);

}  // namespace budgetleak::metrics
