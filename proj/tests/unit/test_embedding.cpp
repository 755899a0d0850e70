// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "doctest.h"

#include <cmath>
#include <map>

#include "budgetleak/embedding.hpp"
#include "budgetleak/error.hpp"
#include "budgetleak/text_metrics.hpp"

using namespace budgetleak;

namespace {

// Hashed bag of words recomputed from the documented formula.
std::vector<double> oracle_embed(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  const std::uint64_t mult = (z ^ (z >> 31)) | 1ULL;
  int log2dim = 0;
  while ((std::size_t{1} << log2dim) < dim) ++log2dim;
  std::vector<double> v(dim, 0.0);
  for (const auto& t : tokens) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    v[(mult * h) >> (64 - log2dim)] += 1.0;
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("hashed bag of words is deterministic and unit norm") {
  const HashedBowEmbedder e;
  CHECK(e.dim() == 512);
  CHECK(e.embed("the cat sat") == e.embed("the cat sat"));
  CHECK(e.embed("The CAT, sat!") == e.embed("the cat sat"));
  CHECK(std::abs(e.embed("x").norm() - 1.0) <= 1e-12);
  CHECK(std::abs(e.embed("a much longer text with several repeated words words words").norm() - 1.0) <= 1e-12);
  CHECK(e.embed("").norm() == 0.0);
}

TEST_CASE("hashed bag of words matches the hand-recomputed hashing") {
  for (std::size_t dim : {4u, 8u, 512u}) {
    const HashedBowEmbedder e(dim, 42);
    const std::vector<std::string> tokens{"alpha", "beta", "gamma", "alpha"};
    const auto expected = oracle_embed(tokens, dim, 42);
    const auto got = e.embed("alpha beta gamma alpha");
    for (std::size_t i = 0; i < dim; ++i) CHECK(std::abs(got[i] - expected[i]) <= 1e-15);
    // Disjoint texts: cosine equals the oracle's dot product (0 unless buckets collide).
    const auto a = oracle_embed({"alpha"}, dim, 42), b = oracle_embed({"beta", "gamma"}, dim, 42);
    CHECK(std::abs(metrics::cosine_similarity(e.embed("alpha"), e.embed("beta gamma")) - dot(a, b)) <= 1e-15);
  }
  const HashedBowEmbedder e;
  CHECK(metrics::cosine_similarity(e.embed("alpha"), e.embed("zeta")) ==
        (e.bucket("alpha") == e.bucket("zeta") ? doctest::Approx(1.0) : doctest::Approx(0.0)));
}

TEST_CASE("embedder validation and identity") {
  CHECK_THROWS_AS(HashedBowEmbedder(100), Error);
  CHECK_THROWS_AS(EmbeddingVector({}), Error);
  CHECK_THROWS_AS(EmbeddingVector({1.0, NAN}), Error);
  CHECK(HashedBowEmbedder(512, 1).id() != HashedBowEmbedder(512, 2).id());
  CHECK(HashedBowEmbedder(256, 1).id() != HashedBowEmbedder(512, 1).id());
}
