// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "budgetleak/generator.hpp"
#include "budgetleak/knowledge_base.hpp"

namespace budgetleak::rag {

/// Deterministic stand-in for an LLM that reproduces the budget side channel:
/// answers grounded in retrieved context gain ground-truth content much faster
/// per generated token than answers the model has to make up.
struct SyntheticGeneratorConfig {
  double member_gain = 0.15;     // answer tokens revealed per budget token, answer in context
  double nonmember_gain = 0.03;  // same, answer not in context
  double paraphrase_noise = 0.2; // probability a revealed token is replaced by a synonym
  std::uint64_t filler_vocab_seed = 7;
  /// Per-question log-normal spread of the gain (question difficulty); 0 disables.
  double gain_jitter = 0.35;
  /// Fraction of filler tokens drawn from common function words.
  double function_word_rate = 0.3;

  void validate() const;
};

/// Generates the response for one request. The output is the first `budget`
/// tokens of a single per-(seed, query) token stream, so responses at larger
/// budgets extend those at smaller ones. Position i reveals the next answer
/// token when floor(g*(i+1)) > floor(g*i); the stream ends once the whole
/// answer has been revealed.
ProbeResponse synthetic_generate(const GenerationRequest& request, std::string_view answer,
                                 bool target_answer_in_context, const SyntheticGeneratorConfig& cfg,
                                 std::uint64_t rng_seed);

/// True when the answer's token sequence occurs contiguously in some context item.
bool answer_in_context(std::string_view answer, const std::vector<std::string>& context);

/// Generator backend wrapping `synthetic_generate`. It knows the ground-truth
/// answer of every question it may be asked (the world knowledge it could
/// draw on) and checks the retrieved context for it.
class SyntheticGenerator final : public Generator {
 public:
  SyntheticGenerator(SyntheticGeneratorConfig cfg, std::uint64_t seed,
                     std::unordered_map<std::string, std::string> answers_by_query);

  std::string fingerprint() const override;
  std::uint64_t calls() const noexcept { return calls_.load(); }

 protected:
  ProbeResponse do_generate(const GenerationRequest& request) override;

 private:
  SyntheticGeneratorConfig cfg_;
  std::uint64_t seed_;
  std::unordered_map<std::string, std::string> answers_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Synthetic QA corpus: pseudo-word questions and answers with a Zipf-like
/// vocabulary and interleaved function words.
struct SyntheticCorpusConfig {
  std::size_t size = 2000;
  std::size_t question_min_tokens = 10;
  std::size_t question_max_tokens = 16;
  std::size_t answer_min_tokens = 40;
  std::size_t answer_max_tokens = 80;
  std::size_t vocabulary = 6000;
  std::uint64_t seed = 1;
};

std::vector<QaRecord> synthetic_corpus(const SyntheticCorpusConfig& cfg);

}  // namespace budgetleak::rag
