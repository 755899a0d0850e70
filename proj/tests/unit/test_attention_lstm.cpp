// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "budgetleak/attention_lstm.hpp"
#include "budgetleak/error.hpp"

using namespace budgetleak;
using namespace budgetleak::attack;
using budgetleak::metrics::MetricId;

namespace {

const std::vector<MetricId> kMetrics{MetricId::Rouge1, MetricId::Bleu, MetricId::Edit};
const std::vector<int> kBudgets{10, 30, 50, 70, 90};

MultiMetricSequence random_seq(std::mt19937_64& rng, std::string id) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MultiMetricSequence s;
  s.sample_id = std::move(id);
  s.metric_names = kMetrics;
  s.budgets = kBudgets;
  s.values.resize(kMetrics.size() * kBudgets.size());
  for (auto& v : s.values) v = u(rng);
  return s;
}

AttentionLstmClassifier random_model(std::mt19937_64& rng, std::size_t hidden) {
  AttentionLstmClassifier model(kMetrics, kBudgets, hidden);
  std::normal_distribution<double> nd(0.0, 0.6);
  for (auto& p : model.params().flat()) p = nd(rng);
  model.set_normalization({0.5, 0.4, 0.6}, {0.3, 0.25, 0.2});
  return model;
}

// Members hold 1 across every metric and budget, non-members hold 0.
AttackDataset separable(std::size_t per_class) {
  AttackDataset d;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 1 : 0;
    MultiMetricSequence s;
    s.sample_id = "s" + std::to_string(i);
    s.metric_names = kMetrics;
    s.budgets = kBudgets;
    s.values.assign(kMetrics.size() * kBudgets.size(), label ? 1.0 : 0.0);
    s.values[i % s.values.size()] = label ? 0.9 : 0.1;
    d.sequences.push_back(s);
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(123);
  const double eps = 1e-5;
  double worst = 0.0;
  for (int model_i = 0; model_i < 10; ++model_i) {
    auto model = random_model(rng, 4);
    for (int input_i = 0; input_i < 10; ++input_i) {
      const auto x = model.prepare_input(random_seq(rng, "x"));
      const int label = input_i % 2;
      std::vector<double> grad(model.params().size(), 0.0);
      const double l0 = model.loss_and_gradient(x, label, grad);
      CHECK(l0 == doctest::Approx(model.loss(x, label)).epsilon(1e-14));
      auto theta = model.params().flat();
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double saved = theta[k];
        theta[k] = saved + eps;
        const double lp = model.loss(x, label);
        theta[k] = saved - eps;
        const double lm = model.loss(x, label);
        theta[k] = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double scale = std::max(std::abs(numeric), std::abs(grad[k]));
        const double rel = scale < 1e-7 ? 0.0 : std::abs(numeric - grad[k]) / scale;
        worst = std::max(worst, rel);
      }
    }
  }
  MESSAGE("worst relative gradient error = " << worst);
  CHECK(worst <= 1e-4);
}

TEST_CASE("attention weights form a distribution and output is a probability") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto model = random_model(rng, 6);
    const auto seq = random_seq(rng, "x");
    const auto trace = model.forward(model.prepare_input(seq));
    CHECK(trace.alpha.size() == static_cast<Eigen::Index>(kBudgets.size()));
    CHECK(std::abs(trace.alpha.sum() - 1.0) <= 1e-9);
    CHECK((trace.alpha.array() >= 0.0).all());
    const double p = model.predict(seq);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(p == trace.probability);
  }
}

TEST_CASE("zero weights give sigmoid of the output bias") {
  AttentionLstmClassifier model(kMetrics, kBudgets, 5);
  for (auto& p : model.params().flat()) p = 0.0;
  model.params().b_out() = 0.7;
  model.set_normalization({0, 0, 0}, {1, 1, 1});
  std::mt19937_64 rng(1);
  CHECK(model.predict(random_seq(rng, "x")) == doctest::Approx(1.0 / (1.0 + std::exp(-0.7))).epsilon(1e-15));
  // Uniform attention when the attention query is zero.
  const auto trace = model.forward(model.prepare_input(random_seq(rng, "y")));
  for (Eigen::Index t = 0; t < trace.alpha.size(); ++t) CHECK(trace.alpha[t] == doctest::Approx(0.2));
}

TEST_CASE("shape mismatches are rejected") {
  std::mt19937_64 rng(2);
  const auto model = random_model(rng, 3);
  auto seq = random_seq(rng, "x");
  seq.budgets = {10, 30, 50, 70, 91};
  CHECK_THROWS_AS(model.predict(seq), Error);
  seq = random_seq(rng, "x");
  seq.metric_names = {MetricId::Rouge1, MetricId::Bleu, MetricId::Cosine};
  CHECK_THROWS_AS(model.predict(seq), Error);
}

TEST_CASE("metric storage order does not change predictions") {
  std::mt19937_64 rng(4);
  const auto model = random_model(rng, 4);
  for (int t = 0; t < 20; ++t) {
    const auto seq = random_seq(rng, "x");
    // Same data with metric rows stored as Edit, Rouge1, Bleu.
    MultiMetricSequence perm = seq;
    perm.metric_names = {MetricId::Edit, MetricId::Rouge1, MetricId::Bleu};
    const std::size_t n = kBudgets.size();
    const std::size_t src[3] = {2, 0, 1};
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t j = 0; j < n; ++j) perm.values[r * n + j] = seq.values[src[r] * n + j];
    }
    CHECK(model.predict(perm) == model.predict(seq));
  }
  // A model built with a different metric listing order is the same model.
  AttentionLstmClassifier other({MetricId::Edit, MetricId::Bleu, MetricId::Rouge1}, kBudgets, 4);
  CHECK(other.metric_names() == std::vector<MetricId>{MetricId::Rouge1, MetricId::Bleu, MetricId::Edit});
}

TEST_CASE("training on separable data") {
  const auto data = separable(20);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.hidden_dim = 8;
  cfg.batch_size = 8;
  TrainReport report;
  const auto model = train_p(data, cfg, &report);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    correct += (model.predict(data.sequences[i]) > 0.5) == (data.labels[i] == 1);
  }
  CHECK(correct == data.sequences.size());
  REQUIRE(report.epoch_loss.size() == 50);
  for (std::size_t e = 1; e < report.epoch_loss.size(); ++e) {
    CHECK(report.epoch_loss[e] <= report.epoch_loss[e - 1] + 1e-12);
  }
  CHECK(report.epoch_loss.back() == doctest::Approx(dataset_loss(model, data)));

  SUBCASE("sgd also separates") {
    cfg.optimizer = Optimizer::Sgd;
    cfg.lr_start = 0.5;
    cfg.lr_end = 0.05;
    cfg.epochs = 200;
    const auto sgd = train_p(data, cfg);
    for (std::size_t i = 0; i < data.sequences.size(); ++i) {
      CHECK((sgd.predict(data.sequences[i]) > 0.5) == (data.labels[i] == 1));
    }
  }
}

TEST_CASE("training is deterministic and parallel gradients equal serial") {
  std::mt19937_64 rng(8);
  AttackDataset data;
  for (int i = 0; i < 40; ++i) {
    data.sequences.push_back(random_seq(rng, "s" + std::to_string(i)));
    data.labels.push_back(i % 2);
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.hidden_dim = 6;
  const auto a = train_p(data, cfg);
  const auto b = train_p(data, cfg);
  CHECK(a == b);
  cfg.parallel = false;
  CHECK(train_p(data, cfg) == a);
  cfg.seed = 2;
  CHECK_FALSE(train_p(data, cfg) == a);

  std::vector<RowMatrix> inputs;
  for (const auto& s : data.sequences) inputs.push_back(a.prepare_input(s));
  std::vector<std::size_t> batch(40);
  for (std::size_t i = 0; i < 40; ++i) batch[i] = (i * 7) % 40;
  std::vector<double> g1(a.params().size(), 0.0), g2(a.params().size(), 0.0);
  const double l1 = batch_gradient(a, inputs, data.labels, batch, false, g1);
  const double l2 = batch_gradient(a, inputs, data.labels, batch, true, g2);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("dataset and config validation") {
  auto data = separable(3);
  data.labels.assign(data.labels.size(), 1);
  CHECK_THROWS_AS(train_p(data, TrainConfig{}), Error);
  CHECK_THROWS_AS(train_p(AttackDataset{}, TrainConfig{}), Error);
  auto mixed = separable(3);
  mixed.sequences[0].budgets = {1, 2, 3, 4, 5};
  CHECK_THROWS_AS(mixed.validate(), Error);
  TrainConfig cfg;
  cfg.lr_end = 0.02;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);

  auto labelled = separable(2).sequences;
  for (std::size_t i = 0; i < labelled.size(); ++i) labelled[i].label = i < 2 ? 1 : 0;
  const auto d = AttackDataset::from_labelled(labelled);
  CHECK(d.labels == std::vector<int>{1, 1, 0, 0});
  labelled[0].label.reset();
  CHECK_THROWS_AS(AttackDataset::from_labelled(labelled), Error);
}

TEST_CASE("normalisation statistics") {
  const auto data = separable(4);
  AttentionLstmClassifier model(kMetrics, kBudgets, 2);
  model.fit_normalization(data.sequences);
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto& s : data.sequences) {
      for (double v : s.row(r)) {
        sum += v;
        sq += v * v;
        n += 1.0;
      }
    }
    const double mean = sum / n;
    CHECK(model.norm_mean()[r] == doctest::Approx(mean));
    CHECK(model.norm_std()[r] == doctest::Approx(std::sqrt(sq / n - mean * mean)));
  }
  model.set_normalization({0, 0, 0}, {0, 1e-12, 2});
  CHECK(model.norm_std()[0] == 1e-8);
  CHECK(model.norm_std()[1] == 1e-8);
  CHECK(model.norm_std()[2] == 2.0);
}

TEST_CASE("serialisation round-trip") {
  std::mt19937_64 rng(6);
  const auto model = random_model(rng, 5);
  const auto back = AttentionLstmClassifier::from_json(model.to_json());
  CHECK(back == model);
  const auto path = std::filesystem::temp_directory_path() / "budgetleak_lstm_test.json";
  model.save(path, "fp42");
  std::string fp;
  const auto loaded = AttentionLstmClassifier::load(path, &fp);
  CHECK(fp == "fp42");
  for (int t = 0; t < 20; ++t) {
    const auto seq = random_seq(rng, "x");
    CHECK(std::abs(loaded.predict(seq) - model.predict(seq)) <= 1e-12);
  }
  auto doc = model.to_json();
  doc["format"] = "something.else";
  CHECK_THROWS_AS(AttentionLstmClassifier::from_json(doc), Error);
  std::filesystem::remove(path);
}
