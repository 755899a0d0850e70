// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/fcm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "budgetleak/error.hpp"
#include "budgetleak/kernels.hpp"
#include "budgetleak/log.hpp"
#include "budgetleak/rng.hpp"

namespace budgetleak::attack {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

std::size_t distinct_rows(std::span<const double> points, std::size_t n, std::size_t dim) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto row = [&](std::size_t i) { return points.subspan(i * dim, dim); };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = row(a), rb = row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  std::size_t distinct = n > 0 ? 1 : 0;
  for (std::size_t k = 1; k < n; ++k) {
    const auto ra = row(idx[k - 1]), rb = row(idx[k]);
    if (!std::equal(ra.begin(), ra.end(), rb.begin())) ++distinct;
  }
  return distinct;
}

}  // namespace

void FcmOptions::validate() const {
  if (clusters < 2) throw Error(ErrorKind::InvalidArgument, "fcm: need at least 2 clusters");
  if (!(fuzzifier > 1.0) || !std::isfinite(fuzzifier)) throw Error(ErrorKind::InvalidArgument, "fcm: fuzzifier must be > 1");
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "fcm: tol must be > 0");
  if (max_iter < 1) throw Error(ErrorKind::InvalidArgument, "fcm: max_iter must be >= 1");
}

FuzzyClustering FuzzyClustering::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != clusters) throw Error(ErrorKind::DimensionMismatch, "permutation size differs from cluster count");
  FuzzyClustering out = *this;
  const std::size_t n = size();
  for (std::size_t k = 0; k < clusters; ++k) {
    for (std::size_t d = 0; d < dim; ++d) out.centroids[k * dim + d] = centroids[perm[k] * dim + d];
    for (std::size_t i = 0; i < n; ++i) out.memberships[i * clusters + k] = memberships[i * clusters + perm[k]];
    if (member_cluster >= 0 && perm[k] == static_cast<std::size_t>(member_cluster)) out.member_cluster = static_cast<int>(k);
  }
  return out;
}

nlohmann::json FuzzyClustering::to_json() const {
  return {{"format", "budgetleak.fcm"}, {"version", 1},          {"clusters", clusters},
          {"dim", dim},                 {"fuzzifier", fuzzifier}, {"centroids", centroids},
          {"memberships", memberships}, {"objective", objective}, {"iterations", iterations},
          {"converged", converged},     {"member_cluster", member_cluster}};
}

FuzzyClustering FuzzyClustering::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "budgetleak.fcm" || doc.at("version").get<int>() != 1) {
      throw Error(ErrorKind::InvalidArgument, "not a version-1 clustering document");
    }
    FuzzyClustering fc;
    fc.clusters = doc.at("clusters").get<std::size_t>();
    fc.dim = doc.at("dim").get<std::size_t>();
    fc.fuzzifier = doc.at("fuzzifier").get<double>();
    fc.centroids = doc.at("centroids").get<std::vector<double>>();
    fc.memberships = doc.at("memberships").get<std::vector<double>>();
    fc.objective = doc.at("objective").get<std::vector<double>>();
    fc.iterations = doc.at("iterations").get<int>();
    fc.converged = doc.at("converged").get<bool>();
    fc.member_cluster = doc.at("member_cluster").get<int>();
    if (fc.clusters == 0 || fc.centroids.size() != fc.clusters * fc.dim || fc.memberships.size() % fc.clusters != 0) {
      throw Error(ErrorKind::DimensionMismatch, "clustering document has inconsistent shapes");
    }
    return fc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed clustering document: ") + e.what());
  }
}

std::vector<double> feature_matrix(std::span<const FeatureVector> features, std::size_t* dim_out) {
  if (features.empty()) throw Error(ErrorKind::InsufficientData, "no feature vectors");
  const std::size_t dim = features.front().values.size();
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "empty feature vector");
  std::vector<double> out;
  out.reserve(features.size() * dim);
  for (const auto& f : features) {
    if (f.values.size() != dim) {
      throw Error(ErrorKind::DimensionMismatch, "feature vector " + f.sample_id + " has a different length");
    }
    for (double v : f.values) {
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite feature in " + f.sample_id);
      out.push_back(v);
    }
  }
  if (dim_out) *dim_out = dim;
  return out;
}

FeatureScaler FeatureScaler::fit(std::span<const FeatureVector> features, std::size_t blocks) {
  std::size_t dim = 0;
  const auto x = feature_matrix(features, &dim);
  if (blocks == 0 || dim % blocks != 0) throw Error(ErrorKind::InvalidArgument, "feature length not divisible by blocks");
  const std::size_t width = dim / blocks;
  FeatureScaler s{blocks, std::vector<double>(blocks, 0.0), std::vector<double>(blocks, 0.0)};
  const double count = static_cast<double>(features.size() * width);
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) s.mean[d / width] += x[i * dim + d];
  }
  for (double& m : s.mean) m /= count;
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[i * dim + d] - s.mean[d / width];
      s.stddev[d / width] += diff * diff;
    }
  }
  for (double& v : s.stddev) v = std::max(std::sqrt(v / count), 1e-8);
  return s;
}

FeatureVector FeatureScaler::apply(const FeatureVector& f) const {
  if (blocks == 0 || f.values.size() % blocks != 0) {
    throw Error(ErrorKind::DimensionMismatch, "feature vector " + f.sample_id + " does not match the scaler");
  }
  const std::size_t width = f.values.size() / blocks;
  FeatureVector out{f.sample_id, f.values};
  for (std::size_t d = 0; d < out.values.size(); ++d) out.values[d] = (out.values[d] - mean[d / width]) / stddev[d / width];
  return out;
}

std::vector<FeatureVector> FeatureScaler::apply(std::span<const FeatureVector> features) const {
  std::vector<FeatureVector> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(apply(f));
  return out;
}

std::vector<double> kmeanspp_init(std::span<const double> points, std::size_t n, std::size_t dim,
                                  std::size_t clusters, std::uint64_t seed) {
  if (distinct_rows(points, n, dim) < clusters) {
    throw Error(ErrorKind::InsufficientData, "fcm: fewer distinct points than clusters");
  }
  Rng rng(derive_seed(seed, "fcm-kmeanspp"));
  auto row = [&](std::size_t i) { return points.subspan(i * dim, dim); };
  std::vector<double> centroids;
  centroids.reserve(clusters * dim);
  const auto first = static_cast<std::size_t>(uniform_index(rng, n));
  centroids.insert(centroids.end(), row(first).begin(), row(first).end());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(row(i), row(first));
  for (std::size_t c = 1; c < clusters; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    const double target = uniform01(rng) * total;
    std::size_t pick = n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    centroids.insert(centroids.end(), row(pick).begin(), row(pick).end());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(row(i), row(pick)));
  }
  return centroids;
}

double fcm_objective(std::span<const double> points, std::size_t dim, const FuzzyClustering& fc) {
  const std::size_t n = points.size() / dim;
  double j = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < fc.clusters; ++k) {
      j += std::pow(fc.u(i, k), fc.fuzzifier) * sq_dist(points.subspan(i * dim, dim), fc.centroid(k));
    }
  }
  return j;
}

FuzzyClustering fcm_cluster_from(std::span<const double> points, std::size_t dim,
                                 std::span<const double> initial_centroids, const FcmOptions& opts) {
  opts.validate();
  if (dim == 0 || points.size() % dim != 0) throw Error(ErrorKind::DimensionMismatch, "fcm: bad point matrix");
  if (initial_centroids.size() != opts.clusters * dim) {
    throw Error(ErrorKind::DimensionMismatch, "fcm: initial centroids have the wrong shape");
  }
  const std::size_t n = points.size() / dim;
  if (distinct_rows(points, n, dim) < opts.clusters) {
    throw Error(ErrorKind::InsufficientData, "fcm: fewer distinct points than clusters");
  }

  FuzzyClustering fc;
  fc.clusters = opts.clusters;
  fc.dim = dim;
  fc.fuzzifier = opts.fuzzifier;
  fc.centroids.assign(initial_centroids.begin(), initial_centroids.end());
  fc.memberships.assign(n * opts.clusters, 0.0);
  const kernels::MatrixView x{points, n, dim};
  std::vector<double> next(fc.centroids.size());

  auto update_u = [&] {
    const kernels::MatrixView c{fc.centroids, fc.clusters, dim};
    if (opts.parallel) {
      kernels::parallel::fcm_memberships(x, c, fc.fuzzifier, fc.memberships);
    } else {
      kernels::serial::fcm_memberships(x, c, fc.fuzzifier, fc.memberships);
    }
    fc.objective.push_back(fcm_objective(points, dim, fc));
  };

  for (int it = 0; it < opts.max_iter; ++it) {
    update_u();
    if (opts.parallel) {
      kernels::parallel::fcm_centroids(x, fc.memberships, fc.clusters, fc.fuzzifier, next);
    } else {
      kernels::serial::fcm_centroids(x, fc.memberships, fc.clusters, fc.fuzzifier, next);
    }
    double shift = 0.0;
    for (std::size_t k = 0; k < fc.clusters; ++k) {
      shift = std::max(shift, std::sqrt(sq_dist(std::span<const double>(next).subspan(k * dim, dim), fc.centroid(k))));
    }
    fc.centroids.swap(next);
    fc.iterations = it + 1;
    if (shift < opts.tol) {
      fc.converged = true;
      break;
    }
  }
  update_u();
  if (!fc.converged) log::warn("fcm_not_converged", {{"iterations", fc.iterations}});
  return fc;
}

FuzzyClustering fcm_cluster(std::span<const FeatureVector> features, const FcmOptions& opts) {
  opts.validate();
  std::size_t dim = 0;
  const auto points = feature_matrix(features, &dim);
  const auto init = kmeanspp_init(points, features.size(), dim, opts.clusters, opts.seed);
  return fcm_cluster_from(points, dim, init, opts);
}

std::size_t label_member_cluster(const FuzzyClustering& fc, std::span<const double> quality) {
  if (quality.size() != fc.size()) throw Error(ErrorKind::DimensionMismatch, "quality length differs from sample count");
  std::vector<double> mean(fc.clusters, 0.0);
  for (std::size_t k = 0; k < fc.clusters; ++k) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fc.size(); ++i) {
      num += fc.u(i, k) * quality[i];
      den += fc.u(i, k);
    }
    mean[k] = den > 0.0 ? num / den : 0.0;
  }
  const auto best = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  if (std::count(mean.begin(), mean.end(), mean[best]) > 1) {
    log::warn("member_cluster_tie", {{"cluster", best}, {"mean_quality", mean[best]}});
  }
  return best;
}

std::vector<ZPrediction> infer_z(const FuzzyClustering& fc, double threshold) {
  if (fc.member_cluster < 0 || static_cast<std::size_t>(fc.member_cluster) >= fc.clusters) {
    throw Error(ErrorKind::InvalidArgument, "infer_z: member cluster not labelled");
  }
  std::vector<ZPrediction> out(fc.size());
  for (std::size_t i = 0; i < fc.size(); ++i) {
    out[i].score = fc.u(i, static_cast<std::size_t>(fc.member_cluster));
    out[i].label = out[i].score > threshold ? 1 : 0;
  }
  return out;
}

int knn_assign(std::span<const double> query, const KnnReference& ref, std::size_t k) {
  if (ref.size() == 0) throw Error(ErrorKind::InsufficientData, "knn_assign: empty reference set");
  if (k == 0 || k > ref.size()) throw Error(ErrorKind::InvalidArgument, "knn_assign: k must be in [1, N]");
  if (query.size() != ref.dim || ref.points.size() != ref.size() * ref.dim || ref.member_scores.size() != ref.size()) {
    throw Error(ErrorKind::DimensionMismatch, "knn_assign: shape mismatch");
  }
  std::vector<std::pair<double, std::size_t>> dist(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dist[i] = {sq_dist(query, std::span<const double>(ref.points).subspan(i * ref.dim, ref.dim)), i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::size_t members = 0;
  double score = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    members += ref.labels[dist[j].second] == 1 ? 1 : 0;
    score += ref.member_scores[dist[j].second];
  }
  if (2 * members > k) return 1;
  if (2 * members < k) return 0;
  return score / static_cast<double>(k) > 0.5 ? 1 : 0;
}

}  // namespace budgetleak::attack
