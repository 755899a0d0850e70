// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include "budgetleak/error.hpp"
#include "budgetleak/probing.hpp"
#include "budgetleak/synthetic.hpp"
#include "budgetleak/text_metrics.hpp"

using namespace budgetleak;
using namespace budgetleak::rag;

namespace {

double r1(const std::string& cand, const std::string& ref) {
  return metrics::rouge_n(metrics::tokenize(cand), metrics::tokenize(ref), 1);
}

std::vector<QaRecord> corpus(std::size_t n) {
  SyntheticCorpusConfig c;
  c.size = n;
  c.seed = 11;
  return synthetic_corpus(c);
}

std::vector<double> rouge1_sequence(const QaRecord& r, bool member, const SyntheticGeneratorConfig& cfg,
                                    const std::vector<int>& budgets) {
  std::vector<double> out;
  const std::vector<std::string> ctx = member ? std::vector<std::string>{r.text} : std::vector<std::string>{"unrelated"};
  for (int b : budgets) {
    const auto resp = synthetic_generate({r.question, ctx, b}, r.answer, member, cfg, 5);
    out.push_back(r1(resp.text, r.answer));
  }
  return out;
}

// Two-sided Mann-Whitney U p-value (normal approximation with tie correction),
// for the alternative that `a` tends to exceed `b`.
double mann_whitney_p_greater(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::pair<double, int>> all;
  for (double x : a) all.emplace_back(x, 0);
  for (double x : b) all.emplace_back(x, 1);
  std::sort(all.begin(), all.end());
  const double n = static_cast<double>(all.size()), n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  double rank_sum_a = 0.0, tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double t = static_cast<double>(j - i);
    const double avg = (static_cast<double>(i + j) + 1.0) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second == 0) rank_sum_a += avg;
    }
    tie_term += t * t * t - t;
    i = j;
  }
  const double u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
  const double mu = n1 * n2 / 2.0;
  const double sigma = std::sqrt(n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0))));
  return 0.5 * std::erfc((u - mu) / sigma / std::sqrt(2.0));
}

}  // namespace

TEST_CASE("synthetic corpus shape") {
  const auto recs = corpus(100);
  REQUIRE(recs.size() == 100);
  for (const auto& r : recs) {
    CHECK(metrics::tokenize(r.text).size() >= 50);
    CHECK(!r.question.empty());
    CHECK(!r.answer.empty());
  }
  CHECK(corpus(100) == recs);
}

TEST_CASE("answer_in_context") {
  CHECK(answer_in_context("b c", {"a b c d"}));
  CHECK(answer_in_context("B, C", {"x", "a b c d"}));
  CHECK_FALSE(answer_in_context("b d", {"a b c d"}));
  CHECK_FALSE(answer_in_context("b c", {}));
}

TEST_CASE("synthetic responses respect the budget and are deterministic") {
  const auto recs = corpus(40);
  const SyntheticGeneratorConfig cfg;
  for (const auto& r : recs) {
    for (int b : {1, 5, 10, 37, 130, 270}) {
      for (bool member : {true, false}) {
        const GenerationRequest req{r.question, {r.text}, b};
        const auto a = synthetic_generate(req, r.answer, member, cfg, 3);
        CHECK(metrics::tokenize(a.text).size() <= static_cast<std::size_t>(b));
        CHECK(a == synthetic_generate(req, r.answer, member, cfg, 3));
      }
    }
    // Prefix property: larger budgets extend smaller ones.
    const auto small = synthetic_generate({r.question, {r.text}, 20}, r.answer, true, cfg, 3);
    const auto large = synthetic_generate({r.question, {r.text}, 60}, r.answer, true, cfg, 3);
    const auto st = metrics::tokenize(small.text), lt = metrics::tokenize(large.text);
    REQUIRE(st.size() <= lt.size());
    CHECK(std::equal(st.begin(), st.end(), lt.begin()));
  }
}

TEST_CASE("degenerate gains") {
  const auto recs = corpus(30);
  SyntheticGeneratorConfig full;
  full.member_gain = 1.0;
  full.nonmember_gain = 0.0;
  full.paraphrase_noise = 0.0;
  full.gain_jitter = 0.0;
  full.function_word_rate = 0.0;
  for (const auto& r : recs) {
    const int len = static_cast<int>(metrics::tokenize(r.answer).size());
    const auto resp = synthetic_generate({r.question, {r.text}, len + 5}, r.answer, true, full, 1);
    CHECK(metrics::tokenize(resp.text) == metrics::tokenize(r.answer));
    CHECK(r1(resp.text, r.answer) == 1.0);
    for (int b : {10, 50, 150, 270}) {
      const auto non = synthetic_generate({r.question, {"x"}, b}, r.answer, false, full, 1);
      CHECK(r1(non.text, r.answer) <= 0.1);
    }
  }
}

TEST_CASE("config validation") {
  SyntheticGeneratorConfig c;
  c.nonmember_gain = c.member_gain;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.member_gain = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.paraphrase_noise = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(SyntheticGeneratorConfig{}.validate());
}

TEST_CASE("calibration: members rise faster than non-members") {
  const auto recs = corpus(200);
  const SyntheticGeneratorConfig cfg;
  const auto budgets = probing::schedule_sweep().budgets;
  std::vector<double> member_fluct, non_fluct;
  double member_slope = 0.0, non_slope = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const auto m = rouge1_sequence(recs[i], true, cfg, budgets);
    const auto n = rouge1_sequence(recs[100 + i], false, cfg, budgets);
    for (std::size_t k = 1; k < m.size(); ++k) CHECK(m[k] >= m[k - 1]);
    member_slope += (m.back() - m.front()) / (budgets.back() - budgets.front());
    non_slope += (n.back() - n.front()) / (budgets.back() - budgets.front());
    member_fluct.push_back(probing::cumulative_fluctuation(m));
    non_fluct.push_back(probing::cumulative_fluctuation(n));
  }
  CHECK(member_slope > non_slope);
  const double p = mann_whitney_p_greater(member_fluct, non_fluct);
  MESSAGE("Mann-Whitney p = " << p);
  CHECK(p < 0.01);
}

TEST_CASE("SyntheticGenerator looks up answers and detects context") {
  const auto recs = corpus(5);
  std::unordered_map<std::string, std::string> answers;
  for (const auto& r : recs) answers[r.question] = r.answer;
  SyntheticGenerator gen({}, 9, answers);
  const auto with = gen.generate({recs[0].question, {recs[0].text}, 100});
  const auto without = gen.generate({recs[0].question, {recs[1].text}, 100});
  CHECK(r1(with.text, recs[0].answer) > r1(without.text, recs[0].answer));
  CHECK(gen.calls() == 2);
  CHECK(gen.fingerprint() == SyntheticGenerator({}, 9, answers).fingerprint());
  CHECK(gen.fingerprint() != SyntheticGenerator({}, 10, answers).fingerprint());
  CHECK_THROWS_AS(gen.generate({recs[0].question, {}, 0}), Error);
}
