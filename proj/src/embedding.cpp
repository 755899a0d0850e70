// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/embedding.hpp"

#include <bit>
#include <cmath>

#include "budgetleak/error.hpp"
#include "budgetleak/rng.hpp"
#include "budgetleak/text_metrics.hpp"

namespace budgetleak {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorKind::InvalidArgument, "EmbeddingVector: dim must be > 0");
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "EmbeddingVector: non-finite value");
  }
}

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

HashedBowEmbedder::HashedBowEmbedder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), shift_(0), seed_(seed), multiplier_(splitmix64(seed) | 1ULL) {
  if (dim < 2 || !std::has_single_bit(dim)) {
    throw Error(ErrorKind::InvalidArgument, "HashedBowEmbedder: dim must be a power of two >= 2");
  }
  shift_ = 64u - static_cast<unsigned>(std::countr_zero(dim));
}

std::size_t HashedBowEmbedder::bucket(std::string_view token) const {
  return static_cast<std::size_t>((multiplier_ * fnv1a64(token)) >> shift_);
}

EmbeddingVector HashedBowEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  for (const auto& token : metrics::tokenize(text)) v[bucket(token)] += 1.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s > 0.0) {
    const double inv = 1.0 / std::sqrt(s);
    for (double& x : v) x *= inv;
  }
  return EmbeddingVector(std::move(v));
}

std::string HashedBowEmbedder::id() const {
  return "hashed-bow:dim=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
}

}  // namespace budgetleak
