// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

#include "json.hpp"

#include "budgetleak/error.hpp"
#include "budgetleak/rng.hpp"
#include "budgetleak/text_metrics.hpp"

namespace budgetleak::rag {

namespace {

constexpr std::array<std::string_view, 20> kFunctionWords = {
    "the", "of", "and", "to", "a",  "in", "is", "that", "for", "it",
    "with", "as", "on", "was", "be", "by", "this", "are", "or", "an"};

// Content words (corpus) and filler/synonym words use disjoint onsets so they
// cannot collide.
constexpr std::array<std::string_view, 24> kContentSyllables = {
    "ka", "lo", "mi", "su", "re", "to", "na", "vi", "de", "po", "ga", "le",
    "mo", "ri", "sa", "tu", "ne", "bi", "do", "pe", "fa", "li", "mu", "ro"};
constexpr std::array<std::string_view, 16> kFillerSyllables = {
    "zu", "qo", "xa", "zi", "qe", "xo", "zo", "qa", "xe", "zy", "qu", "xi", "ze", "qy", "xu", "za"};

constexpr std::size_t kFillerVocab = 4096;

std::string content_word(std::size_t index) {
  // Bijective base-24 spelling with at least two syllables.
  std::string w;
  std::size_t x = index + kContentSyllables.size();
  while (x > 0) {
    w += kContentSyllables[x % kContentSyllables.size()];
    x /= kContentSyllables.size();
  }
  return w;
}

std::string filler_word(std::uint64_t h) {
  std::string w;
  for (int s = 0; s < 3; ++s) {
    w += kFillerSyllables[h % kFillerSyllables.size()];
    h /= kFillerSyllables.size();
  }
  return w;
}

std::string synonym(const std::string& token) {
  return filler_word(splitmix64(fnv1a64(token) ^ 0x5ab0'5ab0ULL)) + "n";
}

double effective_gain(double base, double jitter, std::uint64_t seed, std::string_view query) {
  if (jitter <= 0.0 || base <= 0.0) return base;
  Rng rng(derive_seed(seed, query, 0xd1ff));
  const double z = standard_normal(rng);
  return std::clamp(base * std::exp(jitter * z - 0.5 * jitter * jitter), 0.0, 1.0);
}

bool contains_run(const metrics::TokenSequence& hay, const metrics::TokenSequence& needle) {
  if (needle.empty()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

void SyntheticGeneratorConfig::validate() const {
  if (!(member_gain > 0.0 && member_gain <= 1.0)) {
    throw Error(ErrorKind::Config, "synthetic.member_gain must be in (0, 1]");
  }
  if (!(nonmember_gain >= 0.0 && nonmember_gain < member_gain)) {
    throw Error(ErrorKind::Config, "synthetic.nonmember_gain must be in [0, member_gain)");
  }
  if (!(paraphrase_noise >= 0.0 && paraphrase_noise <= 1.0)) {
    throw Error(ErrorKind::Config, "synthetic.paraphrase_noise must be in [0, 1]");
  }
  if (!(gain_jitter >= 0.0) || !(function_word_rate >= 0.0 && function_word_rate <= 1.0)) {
    throw Error(ErrorKind::Config, "synthetic.gain_jitter must be >= 0 and function_word_rate in [0, 1]");
  }
}

bool answer_in_context(std::string_view answer, const std::vector<std::string>& context) {
  const auto needle = metrics::tokenize(answer);
  return std::any_of(context.begin(), context.end(),
                     [&](const std::string& c) { return contains_run(metrics::tokenize(c), needle); });
}

ProbeResponse synthetic_generate(const GenerationRequest& request, std::string_view answer,
                                 bool target_answer_in_context, const SyntheticGeneratorConfig& cfg,
                                 std::uint64_t rng_seed) {
  if (request.budget < 1) throw Error(ErrorKind::InvalidArgument, "synthetic_generate: budget must be >= 1");
  const auto answer_tokens = metrics::tokenize(answer);
  const std::size_t total = answer_tokens.size();
  const double base = target_answer_in_context ? cfg.member_gain : cfg.nonmember_gain;
  const double gain = effective_gain(base, cfg.gain_jitter, rng_seed, request.query);

  Rng rng(derive_seed(rng_seed, request.query));
  const std::uint64_t filler_salt = splitmix64(cfg.filler_vocab_seed);
  std::string text;
  std::size_t revealed = 0;
  for (int i = 0; i < request.budget; ++i) {
    if (total > 0 && revealed == total) break;
    const double u_noise = uniform01(rng);
    const double u_function = uniform01(rng);
    const std::uint64_t pick = rng();
    const bool reveal = total > 0 && std::floor(gain * (i + 1)) > std::floor(gain * i);
    std::string token;
    if (reveal) {
      token = answer_tokens[revealed++];
      if (u_noise < cfg.paraphrase_noise) token = synonym(token);
    } else if (u_function < cfg.function_word_rate) {
      token = kFunctionWords[pick % kFunctionWords.size()];
    } else {
      token = filler_word(splitmix64(filler_salt ^ (pick % kFillerVocab)));
    }
    if (!text.empty()) text.push_back(' ');
    text += token;
  }
  ProbeResponse response;
  response.text = std::move(text);
  response.budget = request.budget;
  return enforce_budget(std::move(response), request.budget);
}

SyntheticGenerator::SyntheticGenerator(SyntheticGeneratorConfig cfg, std::uint64_t seed,
                                       std::unordered_map<std::string, std::string> answers_by_query)
    : cfg_(cfg), seed_(seed), answers_(std::move(answers_by_query)) {
  cfg_.validate();
}

std::string SyntheticGenerator::fingerprint() const {
  const nlohmann::json fp = {{"backend", "synthetic"},
                             {"seed", seed_},
                             {"member_gain", cfg_.member_gain},
                             {"nonmember_gain", cfg_.nonmember_gain},
                             {"paraphrase_noise", cfg_.paraphrase_noise},
                             {"filler_vocab_seed", cfg_.filler_vocab_seed},
                             {"gain_jitter", cfg_.gain_jitter},
                             {"function_word_rate", cfg_.function_word_rate}};
  return fp.dump();
}

ProbeResponse SyntheticGenerator::do_generate(const GenerationRequest& request) {
  ++calls_;
  auto it = answers_.find(request.query);
  const std::string_view answer = it == answers_.end() ? std::string_view{} : std::string_view(it->second);
  const bool in_context = !answer.empty() && answer_in_context(answer, request.context);
  return synthetic_generate(request, answer, in_context, cfg_, seed_);
}

std::vector<QaRecord> synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  if (cfg.vocabulary < 2 || cfg.question_min_tokens == 0 || cfg.question_min_tokens > cfg.question_max_tokens ||
      cfg.answer_min_tokens == 0 || cfg.answer_min_tokens > cfg.answer_max_tokens) {
    throw Error(ErrorKind::Config, "synthetic corpus: invalid length or vocabulary settings");
  }
  // Zipf(0.8) over content words.
  std::vector<double> cdf(cfg.vocabulary);
  double acc = 0.0;
  for (std::size_t r = 0; r < cfg.vocabulary; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r + 1), 0.8);
    cdf[r] = acc;
  }
  for (double& c : cdf) c /= acc;
  Rng rng(derive_seed(cfg.seed, "synthetic-corpus"));
  auto draw_word = [&] {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return content_word(static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cdf.begin(), static_cast<std::ptrdiff_t>(cfg.vocabulary) - 1)));
  };
  auto draw_len = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform_index(rng, hi - lo + 1));
  };

  std::vector<QaRecord> out;
  out.reserve(cfg.size);
  std::unordered_set<std::string> questions;
  while (out.size() < cfg.size) {
    std::string question;
    const std::size_t qn = draw_len(cfg.question_min_tokens, cfg.question_max_tokens);
    for (std::size_t i = 0; i < qn; ++i) {
      if (i) question.push_back(' ');
      question += draw_word();
    }
    question += '?';
    std::string answer;
    const std::size_t an = draw_len(cfg.answer_min_tokens, cfg.answer_max_tokens);
    for (std::size_t i = 0; i < an; ++i) {
      if (i) answer.push_back(' ');
      if (uniform01(rng) < 0.3) {
        answer += kFunctionWords[uniform_index(rng, kFunctionWords.size())];
      } else {
        answer += draw_word();
      }
    }
    answer += '.';
    if (!questions.insert(question).second) continue;
    QaRecord r;
    r.id = "syn-" + std::to_string(out.size());
    r.question = std::move(question);
    r.answer = std::move(answer);
    r.text = r.question + " " + r.answer;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace budgetleak::rag
