// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace budgetleak::kernels {

namespace {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

inline double cosine_row(std::span<const double> query, double query_norm, MatrixView rows,
                         std::span<const double> row_norms, std::size_t i) {
  const double denom = query_norm * row_norms[i];
  return denom > 0.0 ? dot(query, rows.row(i)) / denom : 0.0;
}

// Membership row for one point. A point sitting on one or more centroids
// splits its membership evenly over those centroids.
inline void membership_row(std::span<const double> point, MatrixView centroids, double fuzzifier,
                           std::span<double> u_row) {
  const std::size_t c = centroids.rows;
  const double exponent = 1.0 / (fuzzifier - 1.0);  // applied to squared distances
  std::size_t zero_hits = 0;
  for (std::size_t j = 0; j < c; ++j) {
    u_row[j] = sq_dist(point, centroids.row(j));
    if (u_row[j] == 0.0) ++zero_hits;
  }
  if (zero_hits > 0) {
    for (std::size_t j = 0; j < c; ++j) {
      u_row[j] = u_row[j] == 0.0 ? 1.0 / static_cast<double>(zero_hits) : 0.0;
    }
    return;
  }
  // u_ij = 1 / sum_k (d_ij / d_kj)^(2/(m-1)) with d the Euclidean distance,
  // i.e. (d2_ij / d2_kj)^(1/(m-1)) on squared distances.
  const std::vector<double> dist(u_row.begin(), u_row.end());
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::pow(dist[j] / dist[k], exponent);
    u_row[j] = 1.0 / s;
  }
}

inline void centroid_column(MatrixView points, std::span<const double> u, std::size_t clusters,
                            double fuzzifier, std::size_t j, std::span<double> centroids_out) {
  const std::size_t d = points.cols;
  double weight_sum = 0.0;
  for (std::size_t k = 0; k < d; ++k) centroids_out[j * d + k] = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) {
    const double w = std::pow(u[i * clusters + j], fuzzifier);
    weight_sum += w;
    const auto p = points.row(i);
    for (std::size_t k = 0; k < d; ++k) centroids_out[j * d + k] += w * p[k];
  }
  if (weight_sum > 0.0) {
    for (std::size_t k = 0; k < d; ++k) centroids_out[j * d + k] /= weight_sum;
  }
}

inline double norm_of(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace

namespace serial {

void cosine_scores(std::span<const double> query, MatrixView rows, std::span<const double> row_norms,
                   std::span<double> out) {
  const double qn = norm_of(query);
  for (std::size_t i = 0; i < rows.rows; ++i) out[i] = cosine_row(query, qn, rows, row_norms, i);
}

void squared_distances(std::span<const double> point, MatrixView rows, std::span<double> out) {
  for (std::size_t i = 0; i < rows.rows; ++i) out[i] = sq_dist(point, rows.row(i));
}

void fcm_memberships(MatrixView points, MatrixView centroids, double fuzzifier, std::span<double> u_out) {
  const std::size_t c = centroids.rows;
  for (std::size_t i = 0; i < points.rows; ++i) {
    membership_row(points.row(i), centroids, fuzzifier, u_out.subspan(i * c, c));
  }
}

void fcm_centroids(MatrixView points, std::span<const double> u, std::size_t clusters,
                   double fuzzifier, std::span<double> centroids_out) {
  for (std::size_t j = 0; j < clusters; ++j) centroid_column(points, u, clusters, fuzzifier, j, centroids_out);
}

}  // namespace serial

namespace parallel {

void cosine_scores(std::span<const double> query, MatrixView rows, std::span<const double> row_norms,
                   std::span<double> out) {
  const double qn = norm_of(query);
  const auto n = static_cast<std::int64_t>(rows.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = cosine_row(query, qn, rows, row_norms, static_cast<std::size_t>(i));
  }
}

void squared_distances(std::span<const double> point, MatrixView rows, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(rows.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = sq_dist(point, rows.row(static_cast<std::size_t>(i)));
  }
}

void fcm_memberships(MatrixView points, MatrixView centroids, double fuzzifier, std::span<double> u_out) {
  const std::size_t c = centroids.rows;
  const auto n = static_cast<std::int64_t>(points.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    membership_row(points.row(row), centroids, fuzzifier, u_out.subspan(row * c, c));
  }
}

// Parallel over clusters: each centroid's sums run over all points in index
// order on a single thread, so no cross-thread reduction reorders additions.
void fcm_centroids(MatrixView points, std::span<const double> u, std::size_t clusters,
                   double fuzzifier, std::span<double> centroids_out) {
  const auto c = static_cast<std::int64_t>(clusters);
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < c; ++j) {
    centroid_column(points, u, clusters, fuzzifier, static_cast<std::size_t>(j), centroids_out);
  }
}

}  // namespace parallel

}  // namespace budgetleak::kernels
