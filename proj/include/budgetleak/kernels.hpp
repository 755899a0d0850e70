// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

// Data-parallel inner loops. Every kernel exists twice: `serial` is the
// reference used by tests, `parallel` is the OpenMP version used by the
// pipeline. Each output element is computed by exactly one thread with the
// same operation order as the serial loop, so both produce identical bits.

#include <cstddef>
#include <span>

namespace budgetleak::kernels {

/// Row-major view of an N x d matrix.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

namespace serial {

/// out[i] = <query, rows[i]> / (|query| * row_norms[i]); 0 where a norm is 0.
void cosine_scores(std::span<const double> query, MatrixView rows, std::span<const double> row_norms,
                   std::span<double> out);

/// out[i] = |point - rows[i]|^2
void squared_distances(std::span<const double> point, MatrixView rows, std::span<double> out);

/// Fuzzy c-means membership update. `u_out` is N x c row-major.
void fcm_memberships(MatrixView points, MatrixView centroids, double fuzzifier, std::span<double> u_out);

/// Fuzzy c-means centroid update. `centroids_out` is c x d row-major.
void fcm_centroids(MatrixView points, std::span<const double> u, std::size_t clusters,
                   double fuzzifier, std::span<double> centroids_out);

}  // namespace serial

namespace parallel {

void cosine_scores(std::span<const double> query, MatrixView rows, std::span<const double> row_norms,
                   std::span<double> out);
void squared_distances(std::span<const double> point, MatrixView rows, std::span<double> out);
void fcm_memberships(MatrixView points, MatrixView centroids, double fuzzifier, std::span<double> u_out);
void fcm_centroids(MatrixView points, std::span<const double> u, std::size_t clusters,
                   double fuzzifier, std::span<double> centroids_out);

}  // namespace parallel

}  // namespace budgetleak::kernels
