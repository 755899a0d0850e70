// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/attention_lstm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "budgetleak/error.hpp"
#include "budgetleak/rng.hpp"

namespace budgetleak::attack {

using probing::MetricId;

namespace {

constexpr const char* kModelFormat = "budgetleak.attention_lstm";
constexpr int kModelVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) { return z.unaryExpr([](double v) { return sigmoid(v); }); }

std::vector<MetricId> canonical(std::vector<MetricId> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

// --- dataset ---------------------------------------------------------------

void AttackDataset::validate() const {
  if (sequences.empty()) throw Error(ErrorKind::InsufficientData, "attack dataset is empty");
  if (sequences.size() != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "attack dataset: sequences and labels differ in length");
  }
  const auto names = canonical(sequences.front().metric_names);
  const auto& budgets = sequences.front().budgets;
  bool has[2] = {false, false};
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    sequences[i].validate();
    if (canonical(sequences[i].metric_names) != names || sequences[i].budgets != budgets) {
      throw Error(ErrorKind::DimensionMismatch,
                  "attack dataset: sequence " + sequences[i].sample_id + " has different metrics or budgets");
    }
    if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorKind::InvalidArgument, "attack dataset: labels must be 0/1");
    has[labels[i]] = true;
  }
  if (!has[0] || !has[1]) {
    throw Error(ErrorKind::InsufficientData, "attack dataset contains a single class; need members and non-members");
  }
}

AttackDataset AttackDataset::from_labelled(std::vector<MultiMetricSequence> sequences) {
  AttackDataset data;
  for (auto& s : sequences) {
    if (!s.label) throw Error(ErrorKind::InvalidArgument, "sequence " + s.sample_id + " has no membership label");
    data.labels.push_back(*s.label);
    data.sequences.push_back(std::move(s));
  }
  return data;
}

// --- parameters -------------------------------------------------------------

LstmParameters::LstmParameters(std::size_t input_dim, std::size_t hidden_dim)
    : m_(input_dim), h_(hidden_dim) {
  if (input_dim == 0 || hidden_dim == 0) throw Error(ErrorKind::InvalidArgument, "LSTM dims must be positive");
  theta_.assign(off_c() + 1, 0.0);
}

std::vector<LstmParameters::Tensor> LstmParameters::tensors() const {
  return {{"W", 4 * h_, m_, 0},          {"U", 4 * h_, h_, off_U()}, {"b", 4 * h_, 1, off_b()},
          {"Wa", h_, h_, off_Wa()},      {"va", h_, 1, off_va()},   {"w_out", h_, 1, off_w()},
          {"b_out", 1, 1, off_c()}};
}

// --- model ------------------------------------------------------------------

AttentionLstmClassifier::AttentionLstmClassifier(std::vector<MetricId> metric_names, std::vector<int> budgets,
                                                 std::size_t hidden_dim)
    : metric_names_(canonical(std::move(metric_names))),
      budgets_(std::move(budgets)),
      norm_mean_(metric_names_.size(), 0.0),
      norm_std_(metric_names_.size(), 1.0),
      params_(metric_names_.size(), hidden_dim) {
  if (std::adjacent_find(metric_names_.begin(), metric_names_.end()) != metric_names_.end()) {
    throw Error(ErrorKind::InvalidArgument, "attention LSTM: duplicate metric names");
  }
  probing::BudgetSchedule{budgets_, probing::ScheduleKind::Custom}.validate();
}

void AttentionLstmClassifier::set_normalization(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != metric_names_.size() || stddev.size() != metric_names_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "normalization statistics do not match metric count");
  }
  for (double& s : stddev) {
    if (!std::isfinite(s)) throw Error(ErrorKind::InvalidArgument, "non-finite normalization std");
    s = std::max(s, 1e-8);
  }
  norm_mean_ = std::move(mean);
  norm_std_ = std::move(stddev);
}

void AttentionLstmClassifier::fit_normalization(std::span<const MultiMetricSequence> data) {
  const std::size_t m = metric_names_.size();
  std::vector<double> mean(m, 0.0), var(m, 0.0);
  std::vector<double> count(m, 0.0);
  for (const auto& seq : data) {
    for (std::size_t k = 0; k < m; ++k) {
      const auto row = seq.metric_index(metric_names_[k]);
      if (!row) throw Error(ErrorKind::DimensionMismatch, "fit_normalization: missing metric in " + seq.sample_id);
      for (double v : seq.row(*row)) {
        mean[k] += v;
        count[k] += 1.0;
      }
    }
  }
  for (std::size_t k = 0; k < m; ++k) mean[k] /= std::max(count[k], 1.0);
  for (const auto& seq : data) {
    for (std::size_t k = 0; k < m; ++k) {
      for (double v : seq.row(*seq.metric_index(metric_names_[k]))) var[k] += (v - mean[k]) * (v - mean[k]);
    }
  }
  for (std::size_t k = 0; k < m; ++k) var[k] = std::sqrt(var[k] / std::max(count[k], 1.0));
  set_normalization(std::move(mean), std::move(var));
}

void AttentionLstmClassifier::initialize(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "attention-lstm-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(params_.hidden_dim()));
  auto fill = [&](auto&& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = uniform(rng, -scale, scale);
  };
  fill(params_.W());
  fill(params_.U());
  params_.b().setZero();
  params_.b().segment(static_cast<Eigen::Index>(params_.hidden_dim()),
                      static_cast<Eigen::Index>(params_.hidden_dim()))
      .setOnes();
  fill(params_.Wa());
  fill(params_.va());
  fill(params_.w_out());
  params_.b_out() = 0.0;
}

RowMatrix AttentionLstmClassifier::prepare_input(const MultiMetricSequence& seq) const {
  if (seq.budgets != budgets_) {
    throw Error(ErrorKind::DimensionMismatch, "sequence " + seq.sample_id + ": budgets differ from the model's");
  }
  if (seq.rows() != metric_names_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "sequence " + seq.sample_id + ": metric count differs from the model's");
  }
  RowMatrix x(static_cast<Eigen::Index>(metric_names_.size()), static_cast<Eigen::Index>(budgets_.size()));
  for (std::size_t k = 0; k < metric_names_.size(); ++k) {
    const auto row = seq.metric_index(metric_names_[k]);
    if (!row) {
      throw Error(ErrorKind::DimensionMismatch, "sequence " + seq.sample_id + " lacks metric " +
                                                    std::string(metrics::to_string(metric_names_[k])));
    }
    for (std::size_t t = 0; t < budgets_.size(); ++t) {
      x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) =
          (seq.at(*row, t) - norm_mean_[k]) / norm_std_[k];
    }
  }
  return x;
}

ForwardTrace AttentionLstmClassifier::forward(const RowMatrix& x) const {
  const auto h = static_cast<Eigen::Index>(params_.hidden_dim());
  const auto steps = static_cast<std::size_t>(x.cols());
  const auto W = params_.W();
  const auto U = params_.U();
  const auto b = params_.b();
  const auto Wa = params_.Wa();
  const auto va = params_.va();

  ForwardTrace tr;
  tr.gates.reserve(steps);
  tr.cells.reserve(steps);
  tr.hidden.reserve(steps);
  tr.attn_pre.reserve(steps);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd scores(static_cast<Eigen::Index>(steps));
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::VectorXd z = W * x.col(static_cast<Eigen::Index>(t)) + U * h_prev + b;
    Eigen::VectorXd gates(4 * h);
    gates.segment(0, h) = sigmoid(Eigen::VectorXd(z.segment(0, h)));
    gates.segment(h, h) = sigmoid(Eigen::VectorXd(z.segment(h, h)));
    gates.segment(2 * h, h) = z.segment(2 * h, h).array().tanh().matrix();
    gates.segment(3 * h, h) = sigmoid(Eigen::VectorXd(z.segment(3 * h, h)));
    Eigen::VectorXd c = gates.segment(h, h).cwiseProduct(c_prev) + gates.segment(0, h).cwiseProduct(gates.segment(2 * h, h));
    Eigen::VectorXd hidden = gates.segment(3 * h, h).cwiseProduct(Eigen::VectorXd(c.array().tanh().matrix()));
    Eigen::VectorXd a = (Wa * hidden).array().tanh().matrix();
    scores(static_cast<Eigen::Index>(t)) = va.dot(a);
    h_prev = hidden;
    c_prev = c;
    tr.gates.push_back(std::move(gates));
    tr.cells.push_back(std::move(c));
    tr.hidden.push_back(std::move(hidden));
    tr.attn_pre.push_back(std::move(a));
  }
  const double top = scores.maxCoeff();
  tr.alpha = (scores.array() - top).exp().matrix();
  tr.alpha /= tr.alpha.sum();
  tr.context = Eigen::VectorXd::Zero(h);
  for (std::size_t t = 0; t < steps; ++t) tr.context += tr.alpha(static_cast<Eigen::Index>(t)) * tr.hidden[t];
  tr.logit = params_.w_out().dot(tr.context) + params_.b_out();
  tr.probability = sigmoid(tr.logit);
  return tr;
}

double AttentionLstmClassifier::loss(const RowMatrix& x, int label) const {
  const double z = forward(x).logit;
  return softplus(z) - static_cast<double>(label) * z;
}

double AttentionLstmClassifier::loss_and_gradient(const RowMatrix& x, int label, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw Error(ErrorKind::DimensionMismatch, "gradient buffer has wrong size");
  const ForwardTrace tr = forward(x);
  const auto h = static_cast<Eigen::Index>(params_.hidden_dim());
  const auto steps = static_cast<std::size_t>(x.cols());
  const double y = static_cast<double>(label);

  LstmParameters g(params_.input_dim(), params_.hidden_dim());
  const double dlogit = tr.probability - y;
  g.w_out() = dlogit * tr.context;
  g.b_out() = dlogit;
  const Eigen::VectorXd dcontext = dlogit * params_.w_out();

  // Attention pooling.
  Eigen::VectorXd dalpha(static_cast<Eigen::Index>(steps));
  for (std::size_t t = 0; t < steps; ++t) dalpha(static_cast<Eigen::Index>(t)) = dcontext.dot(tr.hidden[t]);
  const double weighted = tr.alpha.dot(dalpha);
  std::vector<Eigen::VectorXd> dh_direct(steps);
  const auto Wa = params_.Wa();
  const auto va = params_.va();
  for (std::size_t t = 0; t < steps; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    const double de = tr.alpha(ti) * (dalpha(ti) - weighted);
    const Eigen::VectorXd& a = tr.attn_pre[t];
    g.va() += de * a;
    const Eigen::VectorXd dpre = (de * va).cwiseProduct(Eigen::VectorXd((1.0 - a.array().square()).matrix()));
    g.Wa() += dpre * tr.hidden[t].transpose();
    dh_direct[t] = tr.alpha(ti) * dcontext + Wa.transpose() * dpre;
  }

  // Backpropagation through time.
  const auto U = params_.U();
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(h);
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(h);
  for (std::size_t step = steps; step-- > 0;) {
    const Eigen::VectorXd& gates = tr.gates[step];
    const auto i = gates.segment(0, h);
    const auto f = gates.segment(h, h);
    const auto gg = gates.segment(2 * h, h);
    const auto o = gates.segment(3 * h, h);
    const Eigen::VectorXd tanh_c = tr.cells[step].array().tanh().matrix();
    const Eigen::VectorXd& c_prev = step > 0 ? tr.cells[step - 1] : zeros;
    const Eigen::VectorXd& h_prev = step > 0 ? tr.hidden[step - 1] : zeros;

    const Eigen::VectorXd dh = dh_direct[step] + dh_next;
    const Eigen::VectorXd d_o = dh.cwiseProduct(tanh_c);
    const Eigen::VectorXd dc =
        dh.cwiseProduct(o).cwiseProduct(Eigen::VectorXd((1.0 - tanh_c.array().square()).matrix())) + dc_next;
    Eigen::VectorXd dz(4 * h);
    dz.segment(0, h) = dc.cwiseProduct(gg).array() * i.array() * (1.0 - i.array());
    dz.segment(h, h) = dc.cwiseProduct(c_prev).array() * f.array() * (1.0 - f.array());
    dz.segment(2 * h, h) = dc.cwiseProduct(i).array() * (1.0 - gg.array().square());
    dz.segment(3 * h, h) = d_o.array() * o.array() * (1.0 - o.array());

    g.W() += dz * x.col(static_cast<Eigen::Index>(step)).transpose();
    g.U() += dz * h_prev.transpose();
    g.b() += dz;
    dh_next = U.transpose() * dz;
    dc_next = dc.cwiseProduct(f);
  }

  const auto flat = g.flat();
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += flat[k];
  return softplus(tr.logit) - y * tr.logit;
}

double AttentionLstmClassifier::predict(const MultiMetricSequence& seq) const {
  const double p = forward(prepare_input(seq)).probability;
  return std::clamp(p, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

// --- serialization ------------------------------------------------------------

nlohmann::json AttentionLstmClassifier::to_json() const {
  nlohmann::json names = nlohmann::json::array();
  for (MetricId id : metric_names_) names.push_back(metrics::to_string(id));
  nlohmann::json tensors = nlohmann::json::object();
  const auto flat = params_.flat();
  for (const auto& t : params_.tensors()) {
    std::vector<double> data(flat.begin() + static_cast<std::ptrdiff_t>(t.offset),
                             flat.begin() + static_cast<std::ptrdiff_t>(t.offset + t.rows * t.cols));
    tensors[t.name] = {{"shape", {t.rows, t.cols}}, {"data", std::move(data)}};
  }
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"architecture", architecture()},
          {"input_dim", params_.input_dim()},
          {"hidden_dim", params_.hidden_dim()},
          {"metric_names", names},
          {"budgets", budgets_},
          {"norm_mean", norm_mean_},
          {"norm_std", norm_std_},
          {"tensors", tensors}};
}

AttentionLstmClassifier AttentionLstmClassifier::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kModelFormat) {
      throw Error(ErrorKind::InvalidArgument, "not an attention LSTM model document");
    }
    if (doc.at("version").get<int>() != kModelVersion) {
      throw Error(ErrorKind::InvalidArgument, "unsupported model version " + doc.at("version").dump());
    }
    std::vector<MetricId> names;
    for (const auto& n : doc.at("metric_names")) {
      const auto id = metrics::parse_metric(n.get<std::string>());
      if (!id) throw Error(ErrorKind::InvalidArgument, "model: unknown metric " + n.dump());
      names.push_back(*id);
    }
    if (canonical(names) != names) throw Error(ErrorKind::InvalidArgument, "model: metric names not canonical");
    AttentionLstmClassifier model(names, doc.at("budgets").get<std::vector<int>>(),
                                  doc.at("hidden_dim").get<std::size_t>());
    if (doc.at("input_dim").get<std::size_t>() != names.size()) {
      throw Error(ErrorKind::DimensionMismatch, "model: input_dim does not match metric_names");
    }
    model.set_normalization(doc.at("norm_mean").get<std::vector<double>>(),
                            doc.at("norm_std").get<std::vector<double>>());
    auto flat = model.params_.flat();
    for (const auto& t : model.params_.tensors()) {
      const auto& tensor = doc.at("tensors").at(t.name);
      const auto shape = tensor.at("shape").get<std::vector<std::size_t>>();
      const auto data = tensor.at("data").get<std::vector<double>>();
      if (shape != std::vector<std::size_t>{t.rows, t.cols} || data.size() != t.rows * t.cols) {
        throw Error(ErrorKind::DimensionMismatch, std::string("model: tensor ") + t.name + " has the wrong shape");
      }
      for (std::size_t k = 0; k < data.size(); ++k) {
        if (!std::isfinite(data[k])) throw Error(ErrorKind::InvalidArgument, "model: non-finite parameter");
        flat[t.offset + k] = data[k];
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed model document: ") + e.what());
  }
}

void AttentionLstmClassifier::save(const std::filesystem::path& path, std::string_view fingerprint) const {
  nlohmann::json doc = to_json();
  doc["fingerprint"] = fingerprint;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write model " + tmp.string());
    out << doc.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

AttentionLstmClassifier AttentionLstmClassifier::load(const std::filesystem::path& path, std::string* fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "model file not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, "model file " + path.string() + ": " + e.what());
  }
  if (fingerprint) *fingerprint = doc.value("fingerprint", std::string());
  return from_json(doc);
}

// --- training -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::Config, "train: epochs must be >= 1");
  if (!(lr_start > lr_end && lr_end > 0.0)) throw Error(ErrorKind::Config, "train: need lr_start > lr_end > 0");
  if (batch_size == 0) throw Error(ErrorKind::Config, "train: batch_size must be >= 1");
  if (hidden_dim == 0) throw Error(ErrorKind::Config, "train: hidden_dim must be >= 1");
}

double batch_gradient(const AttentionLstmClassifier& model, std::span<const RowMatrix> inputs,
                      std::span<const int> labels, std::span<const std::size_t> batch, bool parallel,
                      std::span<double> grad_out) {
  const std::size_t p = model.params().size();
  std::vector<std::vector<double>> per_sample(batch.size(), std::vector<double>(p, 0.0));
  std::vector<double> losses(batch.size(), 0.0);
  const auto n = static_cast<std::int64_t>(batch.size());
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t s = 0; s < n; ++s) {
      const auto k = static_cast<std::size_t>(s);
      losses[k] = model.loss_and_gradient(inputs[batch[k]], labels[batch[k]], per_sample[k]);
    }
  } else {
    for (std::int64_t s = 0; s < n; ++s) {
      const auto k = static_cast<std::size_t>(s);
      losses[k] = model.loss_and_gradient(inputs[batch[k]], labels[batch[k]], per_sample[k]);
    }
  }
  double total = 0.0;
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    total += losses[k];
    for (std::size_t j = 0; j < p; ++j) grad_out[j] += per_sample[k][j];
  }
  return total;
}

double dataset_loss(const AttentionLstmClassifier& model, const AttackDataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    total += model.loss(model.prepare_input(data.sequences[i]), data.labels[i]);
  }
  return total / static_cast<double>(data.sequences.size());
}

AttentionLstmClassifier train_p(const AttackDataset& data, const TrainConfig& cfg, TrainReport* report) {
  cfg.validate();
  data.validate();
  AttentionLstmClassifier model(data.sequences.front().metric_names, data.sequences.front().budgets, cfg.hidden_dim);
  model.fit_normalization(data.sequences);
  model.initialize(cfg.seed);

  std::vector<RowMatrix> inputs;
  inputs.reserve(data.sequences.size());
  for (const auto& s : data.sequences) inputs.push_back(model.prepare_input(s));

  const std::size_t p = model.params().size();
  std::vector<double> grad(p), m1(p, 0.0), m2(p, 0.0);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "attention-lstm-shuffle"));
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;
  if (report) report->epoch_loss.clear();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    const double lr = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      batch_gradient(model, inputs, data.labels, batch, cfg.parallel, grad);
      const double inv = 1.0 / static_cast<double>(batch.size());
      auto theta = model.params().flat();
      if (cfg.optimizer == Optimizer::Sgd) {
        for (std::size_t j = 0; j < p; ++j) theta[j] -= lr * grad[j] * inv;
      } else {
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t j = 0; j < p; ++j) {
          const double gj = grad[j] * inv;
          m1[j] = beta1 * m1[j] + (1.0 - beta1) * gj;
          m2[j] = beta2 * m2[j] + (1.0 - beta2) * gj * gj;
          theta[j] -= lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + eps);
        }
      }
    }
    if (report) report->epoch_loss.push_back(dataset_loss(model, data));
  }
  return model;
}

}  // namespace budgetleak::attack
