// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "budgetleak/probing.hpp"

namespace budgetleak::attack {

using probing::FeatureVector;

struct FcmOptions {
  std::size_t clusters = 2;
  double fuzzifier = 2.0;
  double tol = 1e-6;
  int max_iter = 300;
  std::uint64_t seed = 1;
  /// Use the OpenMP kernels (bit-identical to the serial ones).
  bool parallel = true;

  void validate() const;
};

/// Result of fuzzy c-means: centroids (c x d) and memberships (N x c), both row-major.
struct FuzzyClustering {
  std::size_t clusters = 0;
  std::size_t dim = 0;
  double fuzzifier = 2.0;
  std::vector<double> centroids;
  std::vector<double> memberships;
  std::vector<double> objective;  // J after each membership update
  int iterations = 0;
  bool converged = false;
  int member_cluster = -1;  // -1 until labelled

  std::size_t size() const noexcept { return clusters ? memberships.size() / clusters : 0; }
  double u(std::size_t i, std::size_t j) const { return memberships[i * clusters + j]; }
  std::span<const double> centroid(std::size_t j) const {
    return std::span<const double>(centroids).subspan(j * dim, dim);
  }
  /// Returns a copy with cluster indices permuted: new cluster k = old perm[k].
  FuzzyClustering permuted(std::span<const std::size_t> perm) const;

  nlohmann::json to_json() const;
  static FuzzyClustering from_json(const nlohmann::json& doc);
};

/// Row-major N x d matrix of feature values; all vectors must share a length.
std::vector<double> feature_matrix(std::span<const FeatureVector> features, std::size_t* dim_out);

/// Per-block z-scoring: the vector is split into `blocks` equal parts (one per
/// metric) and each part is standardised with statistics pooled over all
/// samples. Standard deviations are clamped at 1e-8.
struct FeatureScaler {
  std::size_t blocks = 0;
  std::vector<double> mean;
  std::vector<double> stddev;

  static FeatureScaler fit(std::span<const FeatureVector> features, std::size_t blocks);
  FeatureVector apply(const FeatureVector& f) const;
  std::vector<FeatureVector> apply(std::span<const FeatureVector> features) const;
};

/// Seeded k-means++ initial centroids (c x d).
std::vector<double> kmeanspp_init(std::span<const double> points, std::size_t n, std::size_t dim,
                                  std::size_t clusters, std::uint64_t seed);

/// J = sum_i sum_j u_ij^m |x_i - c_j|^2
double fcm_objective(std::span<const double> points, std::size_t dim, const FuzzyClustering& fc);

/// Fuzzy c-means from k-means++ initial centroids.
FuzzyClustering fcm_cluster(std::span<const FeatureVector> features, const FcmOptions& opts = {});
/// Fuzzy c-means from the given initial centroids (c x d, row-major).
FuzzyClustering fcm_cluster_from(std::span<const double> points, std::size_t dim,
                                 std::span<const double> initial_centroids, const FcmOptions& opts = {});

/// Cluster with the highest membership-weighted mean quality. Ties go to the
/// lowest index with a warning.
std::size_t label_member_cluster(const FuzzyClustering& fc, std::span<const double> quality);

struct ZPrediction {
  double score = 0.0;  // membership in the member cluster
  int label = 0;
};

/// score = membership in the member cluster; label = score > threshold.
std::vector<ZPrediction> infer_z(const FuzzyClustering& fc, double threshold = 0.5);

/// Labelled reference set for KNN assignment.
struct KnnReference {
  std::size_t dim = 0;
  std::vector<double> points;          // N x dim
  std::vector<int> labels;             // 0/1
  std::vector<double> member_scores;   // membership in the member cluster

  std::size_t size() const noexcept { return labels.size(); }
};

/// Majority label among the k nearest reference points (Euclidean distance,
/// ties in distance broken by index). A tied vote goes to member when the mean
/// member score of the k neighbours exceeds 0.5.
int knn_assign(std::span<const double> query, const KnnReference& ref, std::size_t k = 5);

}  // namespace budgetleak::attack
