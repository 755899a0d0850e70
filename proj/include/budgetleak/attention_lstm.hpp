// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "budgetleak/probing.hpp"

namespace budgetleak::attack {

using probing::MultiMetricSequence;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labelled multi-metric sequences from the shadow RAG (1 = member).
struct AttackDataset {
  std::vector<MultiMetricSequence> sequences;
  std::vector<int> labels;

  /// Same metrics and budgets everywhere, 0/1 labels, both classes present.
  void validate() const;
  /// Builds a dataset from sequences carrying labels.
  static AttackDataset from_labelled(std::vector<MultiMetricSequence> sequences);
};

/// Scores a multi-metric sequence with a membership probability. The
/// attention-recurrent model is the shipped implementation; plain recurrent,
/// transformer or state-space classifiers plug in here.
class SequenceClassifier {
 public:
  virtual ~SequenceClassifier() = default;
  virtual double predict(const MultiMetricSequence& seq) const = 0;
  virtual std::string architecture() const = 0;
};

/// Flat parameter vector with named, row-major views:
///   W  (4h x m)  input weights, gate blocks ordered input, forget, cell, output
///   U  (4h x h)  recurrent weights
///   b  (4h)      gate biases
///   Wa (h x h)   attention projection
///   va (h)       attention query
///   w  (h)       output weights
///   c  (1)       output bias
class LstmParameters {
 public:
  LstmParameters() = default;
  LstmParameters(std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const noexcept { return m_; }
  std::size_t hidden_dim() const noexcept { return h_; }
  std::size_t size() const noexcept { return theta_.size(); }
  std::span<double> flat() noexcept { return theta_; }
  std::span<const double> flat() const noexcept { return theta_; }

  Eigen::Map<RowMatrix> W() { return {ptr(0), rows4(), static_cast<Eigen::Index>(m_)}; }
  Eigen::Map<RowMatrix> U() { return {ptr(off_U()), rows4(), hh()}; }
  Eigen::Map<Eigen::VectorXd> b() { return {ptr(off_b()), rows4()}; }
  Eigen::Map<RowMatrix> Wa() { return {ptr(off_Wa()), hh(), hh()}; }
  Eigen::Map<Eigen::VectorXd> va() { return {ptr(off_va()), hh()}; }
  Eigen::Map<Eigen::VectorXd> w_out() { return {ptr(off_w()), hh()}; }
  double& b_out() { return theta_[off_c()]; }

  Eigen::Map<const RowMatrix> W() const { return {cptr(0), rows4(), static_cast<Eigen::Index>(m_)}; }
  Eigen::Map<const RowMatrix> U() const { return {cptr(off_U()), rows4(), hh()}; }
  Eigen::Map<const Eigen::VectorXd> b() const { return {cptr(off_b()), rows4()}; }
  Eigen::Map<const RowMatrix> Wa() const { return {cptr(off_Wa()), hh(), hh()}; }
  Eigen::Map<const Eigen::VectorXd> va() const { return {cptr(off_va()), hh()}; }
  Eigen::Map<const Eigen::VectorXd> w_out() const { return {cptr(off_w()), hh()}; }
  double b_out() const { return theta_[off_c()]; }

  /// Named tensors in serialization order: (name, rows, cols, offset).
  struct Tensor {
    const char* name;
    std::size_t rows;
    std::size_t cols;
    std::size_t offset;
  };
  std::vector<Tensor> tensors() const;

  friend bool operator==(const LstmParameters&, const LstmParameters&) = default;

 private:
  Eigen::Index rows4() const { return static_cast<Eigen::Index>(4 * h_); }
  Eigen::Index hh() const { return static_cast<Eigen::Index>(h_); }
  std::size_t off_U() const { return 4 * h_ * m_; }
  std::size_t off_b() const { return off_U() + 4 * h_ * h_; }
  std::size_t off_Wa() const { return off_b() + 4 * h_; }
  std::size_t off_va() const { return off_Wa() + h_ * h_; }
  std::size_t off_w() const { return off_va() + h_; }
  std::size_t off_c() const { return off_w() + h_; }
  double* ptr(std::size_t off) { return theta_.data() + off; }
  const double* cptr(std::size_t off) const { return theta_.data() + off; }

  std::size_t m_ = 0;
  std::size_t h_ = 0;
  std::vector<double> theta_;
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
  std::vector<Eigen::VectorXd> gates;   // per step: [i, f, g, o] activations (4h)
  std::vector<Eigen::VectorXd> cells;   // c_t
  std::vector<Eigen::VectorXd> hidden;  // h_t
  std::vector<Eigen::VectorXd> attn_pre;  // tanh(Wa h_t)
  Eigen::VectorXd alpha;                // attention weights over steps
  Eigen::VectorXd context;              // sum_t alpha_t h_t
  double logit = 0.0;
  double probability = 0.0;
};

/// Attention-pooled LSTM over the budget axis:
///   LSTM step per budget column x_t (z-normalised metric values),
///   alpha = softmax_t(va . tanh(Wa h_t)), context = sum_t alpha_t h_t,
///   p = sigmoid(w . context + c).
/// Metric rows are consumed in canonical metric order, so the storage order
/// of metrics inside a sequence never affects the result.
class AttentionLstmClassifier final : public SequenceClassifier {
 public:
  AttentionLstmClassifier() = default;
  AttentionLstmClassifier(std::vector<probing::MetricId> metric_names, std::vector<int> budgets,
                          std::size_t hidden_dim);

  double predict(const MultiMetricSequence& seq) const override;
  std::string architecture() const override { return "attention_lstm"; }

  /// Canonically ordered, z-normalised m x n input matrix (metrics x budgets).
  RowMatrix prepare_input(const MultiMetricSequence& seq) const;

  ForwardTrace forward(const RowMatrix& x) const;
  /// Binary cross-entropy of one sample; adds d(loss)/d(theta) into `grad`.
  double loss_and_gradient(const RowMatrix& x, int label, std::span<double> grad) const;
  double loss(const RowMatrix& x, int label) const;

  /// Per-metric normalisation statistics over every budget of every sequence
  /// in `data`; standard deviations clamped at 1e-8.
  void fit_normalization(std::span<const MultiMetricSequence> data);
  /// Uniform(-1/sqrt(h), 1/sqrt(h)) weights, zero biases, forget-gate bias 1.
  void initialize(std::uint64_t seed);

  LstmParameters& params() noexcept { return params_; }
  const LstmParameters& params() const noexcept { return params_; }
  const std::vector<probing::MetricId>& metric_names() const noexcept { return metric_names_; }
  const std::vector<int>& budgets() const noexcept { return budgets_; }
  const std::vector<double>& norm_mean() const noexcept { return norm_mean_; }
  const std::vector<double>& norm_std() const noexcept { return norm_std_; }
  void set_normalization(std::vector<double> mean, std::vector<double> stddev);

  nlohmann::json to_json() const;
  static AttentionLstmClassifier from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path, std::string_view fingerprint) const;
  static AttentionLstmClassifier load(const std::filesystem::path& path, std::string* fingerprint = nullptr);

  friend bool operator==(const AttentionLstmClassifier& a, const AttentionLstmClassifier& b) {
    return a.metric_names_ == b.metric_names_ && a.budgets_ == b.budgets_ && a.norm_mean_ == b.norm_mean_ &&
           a.norm_std_ == b.norm_std_ && a.params_ == b.params_;
  }

 private:
  std::vector<probing::MetricId> metric_names_;  // canonical order
  std::vector<int> budgets_;
  std::vector<double> norm_mean_;
  std::vector<double> norm_std_;
  LstmParameters params_;
};

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  int epochs = 300;
  double lr_start = 0.01;
  double lr_end = 0.0005;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t hidden_dim = 32;
  Optimizer optimizer = Optimizer::Adam;
  /// Compute per-sample gradients with OpenMP (bit-identical to serial).
  bool parallel = true;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean training loss after each epoch
};

/// Mini-batch training with a linear learning-rate decay from lr_start to
/// lr_end across epochs. Deterministic for a given seed.
AttentionLstmClassifier train_p(const AttackDataset& data, const TrainConfig& cfg, TrainReport* report = nullptr);

/// Mean loss over the dataset.
double dataset_loss(const AttentionLstmClassifier& model, const AttackDataset& data);

/// Sum over a batch of per-sample gradients, computed serially or in parallel.
/// Samples are reduced in index order in both modes.
double batch_gradient(const AttentionLstmClassifier& model, std::span<const RowMatrix> inputs,
                      std::span<const int> labels, std::span<const std::size_t> batch, bool parallel,
                      std::span<double> grad_out);

}  // namespace budgetleak::attack
