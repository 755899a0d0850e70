// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "budgetleak/error.hpp"
#include "budgetleak/fcm.hpp"

#include "oracles.hpp"

using namespace budgetleak;
using namespace budgetleak::attack;

namespace {

std::vector<FeatureVector> to_features(const std::vector<std::vector<double>>& x) {
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < x.size(); ++i) out.push_back({"p" + std::to_string(i), x[i]});
  return out;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& x) {
  std::vector<double> out;
  for (const auto& r : x) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::vector<std::vector<double>> blobs(std::mt19937_64& rng, std::size_t per, double sep, double spread) {
  std::normal_distribution<double> nd(0.0, spread);
  std::vector<std::vector<double>> x;
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const double off = i < per ? 0.0 : sep;
    x.push_back({off + nd(rng), off + nd(rng), nd(rng)});
  }
  return x;
}

}  // namespace

TEST_CASE("six-point planar instance matches a textbook implementation") {
  const std::vector<std::vector<double>> x{{0.0, 0.0}, {1.0, 0.5}, {0.5, 1.2}, {5.0, 5.0}, {6.0, 5.5}, {5.5, 4.2}};
  const std::vector<std::vector<double>> init{{1.0, 1.0}, {4.0, 4.0}};
  FcmOptions opts;
  opts.tol = 1e-12;
  opts.max_iter = 1000;
  const auto pts = flatten(x);
  const auto fc = fcm_cluster_from(pts, 2, flatten(init), opts);
  CHECK(fc.converged);
  const auto oracle = oracle::textbook_fcm(x, init, 2.0, 500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(fc.u(i, j) - oracle.u[i][j]) <= 1e-6);
  }
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t t = 0; t < 2; ++t) CHECK(std::abs(fc.centroid(j)[t] - oracle.c[j][t]) <= 1e-6);
  }
  CHECK(fc.objective.back() == doctest::Approx(fcm_objective(pts, 2, fc)));
}

TEST_CASE("memberships are distributions and the objective never increases") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 20; ++t) {
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> x(60, std::vector<double>(4));
    for (auto& r : x) {
      for (auto& v : r) v = nd(rng);
    }
    FcmOptions opts;
    opts.seed = static_cast<std::uint64_t>(t);
    opts.clusters = 2 + static_cast<std::size_t>(t % 3);
    const auto fc = fcm_cluster(to_features(x), opts);
    for (std::size_t i = 0; i < fc.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < fc.clusters; ++j) {
        CHECK(fc.u(i, j) >= 0.0);
        CHECK(fc.u(i, j) <= 1.0);
        s += fc.u(i, j);
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    for (std::size_t k = 1; k < fc.objective.size(); ++k) {
      CHECK(fc.objective[k] <= fc.objective[k - 1] * (1.0 + 1e-12));
    }
    for (double c : fc.centroids) CHECK(std::isfinite(c));
  }
}

TEST_CASE("separated blobs") {
  std::mt19937_64 rng(1);
  const auto x = blobs(rng, 30, 20.0, 0.3);
  const auto fc = fcm_cluster(to_features(x));
  const std::size_t a = fc.u(0, 0) > 0.5 ? 0 : 1;
  for (std::size_t i = 0; i < 60; ++i) CHECK(fc.u(i, i < 30 ? a : 1 - a) >= 0.99);
}

TEST_CASE("equidistant point splits evenly") {
  const std::vector<std::vector<double>> x{{0.0, 0.0}, {0.0, 1.0}, {10.0, 0.0}, {10.0, 1.0}, {5.0, 0.5}};
  const auto fc = fcm_cluster_from(flatten(x), 2, flatten({{0.0, 0.5}, {10.0, 0.5}}));
  CHECK(fc.u(4, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fc.u(4, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("permuting the input order permutes the result") {
  std::mt19937_64 rng(2);
  const auto x = blobs(rng, 15, 3.0, 1.0);
  const auto init = flatten({{0.5, 0.5, 0.0}, {2.5, 2.5, 0.0}});
  const auto base = fcm_cluster_from(flatten(x), 3, init);
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<double>> px;
  for (auto p : perm) px.push_back(x[p]);
  const auto shuffled = fcm_cluster_from(flatten(px), 3, init);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(shuffled.u(i, j) - base.u(perm[i], j)) <= 1e-9);
  }
}

TEST_CASE("parallel and serial clustering agree exactly") {
  std::mt19937_64 rng(3);
  const auto f = to_features(blobs(rng, 100, 2.0, 1.0));
  FcmOptions serial;
  serial.parallel = false;
  const auto a = fcm_cluster(f, serial);
  const auto b = fcm_cluster(f);
  CHECK(a.memberships == b.memberships);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("too few distinct points") {
  const std::vector<std::vector<double>> same{{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(fcm_cluster(to_features(same)), Error);
  CHECK_THROWS_AS(fcm_cluster(to_features({{1.0}})), Error);
  FcmOptions bad;
  bad.fuzzifier = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("member cluster labelling and inference") {
  FuzzyClustering fc;
  fc.clusters = 2;
  fc.dim = 1;
  fc.centroids = {0.0, 1.0};
  fc.memberships = {1.0, 0.0, 0.9, 0.1, 0.2, 0.8, 0.5, 0.5};
  const std::vector<double> quality{0.0, 0.0, 1.0, 1.0};
  CHECK(label_member_cluster(fc, quality) == 1);
  const std::size_t swap[2] = {1, 0};
  auto p = fc.permuted(swap);
  CHECK(label_member_cluster(p, quality) == 0);

  fc.member_cluster = 1;
  p.member_cluster = 0;
  const auto z = infer_z(fc), zp = infer_z(p);
  REQUIRE(z.size() == 4);
  CHECK(z[0].label == 0);
  CHECK(z[2].label == 1);
  CHECK(z[3].score == 0.5);
  CHECK(z[3].label == 0);  // strict inequality at the boundary
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(z[i].label == zp[i].label);
    CHECK(z[i].score == zp[i].score);
  }
  // Equal weighted quality: lowest index wins.
  CHECK(label_member_cluster(fc, std::vector<double>{0.5, 0.5, 0.5, 0.5}) == 0);
  FuzzyClustering unlabelled = fc;
  unlabelled.member_cluster = -1;
  CHECK_THROWS_AS(infer_z(unlabelled), Error);
}

TEST_CASE("serialisation round-trip") {
  std::mt19937_64 rng(4);
  auto fc = fcm_cluster(to_features(blobs(rng, 5, 3.0, 1.0)));
  fc.member_cluster = 1;
  const auto back = FuzzyClustering::from_json(fc.to_json());
  CHECK(back.memberships == fc.memberships);
  CHECK(back.centroids == fc.centroids);
  CHECK(back.member_cluster == 1);
  CHECK(back.iterations == fc.iterations);
}

TEST_CASE("feature scaler standardises each block") {
  const std::vector<FeatureVector> f{{"a", {1.0, 3.0, 10.0, 10.0}}, {"b", {5.0, 7.0, 10.0, 10.0}}};
  const auto s = FeatureScaler::fit(f, 2);
  CHECK(s.mean == std::vector<double>{4.0, 10.0});
  CHECK(s.stddev[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(s.stddev[1] == 1e-8);
  const auto a = s.apply(f[0]);
  CHECK(a.values[0] == doctest::Approx(-3.0 / std::sqrt(5.0)));
  CHECK(a.values[2] == 0.0);
  CHECK_THROWS_AS(FeatureScaler::fit(std::vector<FeatureVector>{{"x", {1.0, 2.0, 3.0}}}, 2), Error);
}

TEST_CASE("knn assignment matches a brute-force neighbour sort") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    KnnReference ref;
    ref.dim = 2;
    for (int i = 0; i < 20; ++i) {
      ref.points.push_back(u(rng));
      ref.points.push_back(u(rng));
      const double score = u(rng);
      ref.member_scores.push_back(score);
      ref.labels.push_back(score > 0.5 ? 1 : 0);
    }
    const std::vector<double> q{u(rng), u(rng)};
    for (std::size_t k : {1u, 4u, 5u, 20u}) {
      std::vector<std::pair<double, std::size_t>> d;
      for (std::size_t i = 0; i < 20; ++i) {
        const double dx = ref.points[2 * i] - q[0], dy = ref.points[2 * i + 1] - q[1];
        d.emplace_back(dx * dx + dy * dy, i);
      }
      std::sort(d.begin(), d.end());
      int votes = 0;
      double mean_score = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        votes += ref.labels[d[j].second];
        mean_score += ref.member_scores[d[j].second] / static_cast<double>(k);
      }
      int expected = 2 * votes > static_cast<int>(k) ? 1 : 0;
      if (2 * votes == static_cast<int>(k)) expected = mean_score > 0.5 ? 1 : 0;
      CHECK(knn_assign(q, ref, k) == expected);
    }
  }
}

TEST_CASE("knn edge cases") {
  KnnReference ref;
  ref.dim = 1;
  ref.points = {0.0, 1.0, 2.0, 3.0, 4.0};
  ref.labels = {1, 1, 1, 0, 0};
  ref.member_scores = {0.9, 0.8, 0.7, 0.2, 0.1};
  CHECK(knn_assign(std::vector<double>{4.0}, ref, 1) == 0);
  CHECK(knn_assign(std::vector<double>{0.0}, ref, 1) == 1);
  CHECK(knn_assign(std::vector<double>{4.0}, ref, 5) == 1);  // 60/40 global majority
  CHECK_THROWS_AS(knn_assign(std::vector<double>{0.0}, ref, 6), Error);
  CHECK_THROWS_AS(knn_assign(std::vector<double>{0.0, 1.0}, ref, 1), Error);
  CHECK_THROWS_AS(knn_assign(std::vector<double>{0.0}, KnnReference{}, 1), Error);
}
