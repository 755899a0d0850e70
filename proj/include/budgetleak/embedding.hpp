// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace budgetleak {

/// Fixed-dimension real vector produced by an Embedder. Always finite, dim > 0.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double norm() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

/// Text-to-vector encoder. Implementations must be deterministic and safe for
/// concurrent `embed` calls.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dim() const = 0;
  /// Stable identifier recorded in knowledge bases and fingerprints.
  virtual std::string id() const = 0;
};

/// Feature-hashed bag of words over `tokenize`d text, L2-normalised.
/// Bucket of a token = (odd_multiplier * fnv1a64(token)) >> (64 - log2(dim)).
class HashedBowEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDim = 512;
  static constexpr std::uint64_t kDefaultSeed = 0x5eed'b0d9e7ULL;

  explicit HashedBowEmbedder(std::size_t dim = kDefaultDim, std::uint64_t seed = kDefaultSeed);

  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dim() const override { return dim_; }
  std::string id() const override;

  std::size_t bucket(std::string_view token) const;
  std::uint64_t multiplier() const noexcept { return multiplier_; }

 private:
  std::size_t dim_;
  unsigned shift_;
  std::uint64_t seed_;
  std::uint64_t multiplier_;
};

}  // namespace budgetleak
