// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "budgetleak/attention_lstm.hpp"
#include "budgetleak/kernels.hpp"

namespace {

using namespace budgetleak;
using namespace budgetleak::kernels;

struct Data {
  std::size_t n, d;
  std::vector<double> rows, norms, query, centroids, u;
};

Data make_data(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Data x{n, d, std::vector<double>(n * d), std::vector<double>(n), std::vector<double>(d),
         std::vector<double>(2 * d), std::vector<double>(n * 2)};
  for (auto& v : x.rows) v = nd(rng);
  for (auto& v : x.query) v = nd(rng);
  for (auto& v : x.centroids) v = nd(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += x.rows[i * d + k] * x.rows[i * d + k];
    x.norms[i] = std::sqrt(s);
  }
  serial::fcm_memberships({x.rows, n, d}, {x.centroids, 2, d}, 2.0, x.u);
  return x;
}

template <bool Parallel>
void BM_CosineScores(benchmark::State& state) {
  const auto x = make_data(static_cast<std::size_t>(state.range(0)), 512);
  std::vector<double> out(x.n);
  for (auto _ : state) {
    if constexpr (Parallel) parallel::cosine_scores(x.query, {x.rows, x.n, x.d}, x.norms, out);
    else serial::cosine_scores(x.query, {x.rows, x.n, x.d}, x.norms, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_FcmMemberships(benchmark::State& state) {
  const auto x = make_data(static_cast<std::size_t>(state.range(0)), 28);
  std::vector<double> u(x.n * 2);
  for (auto _ : state) {
    if constexpr (Parallel) parallel::fcm_memberships({x.rows, x.n, x.d}, {x.centroids, 2, x.d}, 2.0, u);
    else serial::fcm_memberships({x.rows, x.n, x.d}, {x.centroids, 2, x.d}, 2.0, u);
    benchmark::DoNotOptimize(u.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_FcmCentroids(benchmark::State& state) {
  const auto x = make_data(static_cast<std::size_t>(state.range(0)), 28);
  std::vector<double> c(2 * x.d);
  for (auto _ : state) {
    if constexpr (Parallel) parallel::fcm_centroids({x.rows, x.n, x.d}, x.u, 2, 2.0, c);
    else serial::fcm_centroids({x.rows, x.n, x.d}, x.u, 2, 2.0, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_LstmBatchGradient(benchmark::State& state) {
  const std::vector<metrics::MetricId> names{metrics::MetricId::Cosine, metrics::MetricId::Rouge1,
                                             metrics::MetricId::Rouge2, metrics::MetricId::RougeL,
                                             metrics::MetricId::Bleu,   metrics::MetricId::Edit};
  std::vector<int> budgets;
  for (int b = 10; b <= 270; b += 20) budgets.push_back(b);
  attack::AttentionLstmClassifier model(names, budgets, 32);
  model.initialize(1);
  model.set_normalization(std::vector<double>(6, 0.5), std::vector<double>(6, 0.2));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  std::vector<attack::RowMatrix> inputs;
  std::vector<int> labels;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < batch; ++i) {
    attack::RowMatrix x(6, static_cast<Eigen::Index>(budgets.size()));
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
    inputs.push_back(x);
    labels.push_back(static_cast<int>(i % 2));
    index.push_back(i);
  }
  std::vector<double> grad(model.params().size());
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    benchmark::DoNotOptimize(attack::batch_gradient(model, inputs, labels, index, Parallel, grad));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_CosineScores<false>)->Name("cosine_scores/serial")->Arg(2000)->Arg(8000);
BENCHMARK(BM_CosineScores<true>)->Name("cosine_scores/parallel")->Arg(2000)->Arg(8000);
BENCHMARK(BM_FcmMemberships<false>)->Name("fcm_memberships/serial")->Arg(2000)->Arg(20000);
BENCHMARK(BM_FcmMemberships<true>)->Name("fcm_memberships/parallel")->Arg(2000)->Arg(20000);
BENCHMARK(BM_FcmCentroids<false>)->Name("fcm_centroids/serial")->Arg(2000)->Arg(20000);
BENCHMARK(BM_FcmCentroids<true>)->Name("fcm_centroids/parallel")->Arg(2000)->Arg(20000);
BENCHMARK(BM_LstmBatchGradient<false>)->Name("lstm_batch_gradient/serial")->Arg(32)->Arg(256);
BENCHMARK(BM_LstmBatchGradient<true>)->Name("lstm_batch_gradient/parallel")->Arg(32)->Arg(256);

BENCHMARK_MAIN();
