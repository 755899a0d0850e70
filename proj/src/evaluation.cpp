// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "budgetleak/error.hpp"
#include "budgetleak/rng.hpp"
#include "budgetleak/text_metrics.hpp"

namespace budgetleak::eval {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts count_classes(std::span<const int> labels, const char* op) {
  ClassCounts c;
  for (int label : labels) {
    if (label == 1) {
      ++c.pos;
    } else if (label == 0) {
      ++c.neg;
    } else {
      throw Error(ErrorKind::InvalidArgument, std::string(op) + ": labels must be 0/1");
    }
  }
  if (c.pos == 0 || c.neg == 0) {
    throw Error(ErrorKind::InsufficientData, std::string(op) + ": both members and non-members are required");
  }
  return c;
}

ClassCounts check_binary(std::span<const double> scores, std::span<const int> labels, const char* op) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, std::string(op) + ": scores and labels differ in length");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorKind::InvalidArgument, std::string(op) + ": NaN score");
  }
  return count_classes(labels, op);
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

void take(std::vector<std::string>& out, const std::vector<std::string>& src, std::size_t& cursor, std::size_t n) {
  out.assign(src.begin() + static_cast<std::ptrdiff_t>(cursor), src.begin() + static_cast<std::ptrdiff_t>(cursor + n));
  cursor += n;
}

}  // namespace

void PartitionSizes::validate() const {
  if (target_kb == 0 || shadow_kb == 0 || t_in == 0 || t_out == 0 || s_in == 0 || s_out == 0) {
    throw Error(ErrorKind::Config, "partition sizes must all be positive");
  }
  if (t_in > target_kb) throw Error(ErrorKind::Config, "partition: t_in larger than target_kb");
  if (s_in > shadow_kb) throw Error(ErrorKind::Config, "partition: s_in larger than shadow_kb");
}

void Partition::validate() const {
  std::unordered_map<std::string, const char*> owner;
  auto claim = [&](const std::vector<std::string>& ids, const char* name) {
    for (const auto& id : ids) {
      const auto [it, inserted] = owner.emplace(id, name);
      if (!inserted) {
        throw Error(ErrorKind::InvalidArgument,
                    "partition: id " + id + " appears in both " + it->second + " and " + name);
      }
    }
  };
  claim(target_kb, "target_kb");
  claim(shadow_kb, "shadow_kb");
  claim(t_out, "t_out");
  claim(s_out, "s_out");
  auto subset = [&](const std::vector<std::string>& ids, const char* name, const char* parent) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
      const auto it = owner.find(id);
      if (it == owner.end() || std::string_view(it->second) != parent) {
        throw Error(ErrorKind::InvalidArgument, std::string("partition: ") + name + " id " + id + " not in " + parent);
      }
      if (!seen.insert(id).second) throw Error(ErrorKind::InvalidArgument, "partition: duplicate id " + id);
    }
  };
  subset(t_in, "t_in", "target_kb");
  subset(s_in, "s_in", "shadow_kb");
}

nlohmann::json Partition::to_json() const {
  return {{"format", "budgetleak.partition"}, {"version", 1}, {"seed", seed}, {"min_tokens", min_tokens},
          {"target_kb", target_kb}, {"shadow_kb", shadow_kb}, {"t_in", t_in}, {"t_out", t_out},
          {"s_in", s_in}, {"s_out", s_out}};
}

Partition Partition::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "budgetleak.partition" || doc.at("version").get<int>() != 1) {
      throw Error(ErrorKind::InvalidArgument, "not a version-1 partition document");
    }
    Partition p;
    p.seed = doc.at("seed").get<std::uint64_t>();
    p.min_tokens = doc.at("min_tokens").get<std::size_t>();
    p.target_kb = doc.at("target_kb").get<std::vector<std::string>>();
    p.shadow_kb = doc.at("shadow_kb").get<std::vector<std::string>>();
    p.t_in = doc.at("t_in").get<std::vector<std::string>>();
    p.t_out = doc.at("t_out").get<std::vector<std::string>>();
    p.s_in = doc.at("s_in").get<std::vector<std::string>>();
    p.s_out = doc.at("s_out").get<std::vector<std::string>>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed partition document: ") + e.what());
  }
}

Partition partition(std::span<const rag::QaRecord> corpus, const PartitionSizes& sizes, std::size_t min_tokens,
                    std::uint64_t seed) {
  sizes.validate();
  std::vector<std::string> eligible;
  eligible.reserve(corpus.size());
  std::unordered_set<std::string> seen;
  for (const auto& r : corpus) {
    if (!seen.insert(r.id).second) throw Error(ErrorKind::InvalidArgument, "partition: duplicate id " + r.id);
    if (metrics::count_tokens(r.text) >= min_tokens) eligible.push_back(r.id);
  }
  if (eligible.size() < sizes.required()) {
    throw Error(ErrorKind::InsufficientData,
                "partition: need " + std::to_string(sizes.required()) + " records with >= " +
                    std::to_string(min_tokens) + " tokens but only " + std::to_string(eligible.size()) +
                    " qualify (short by " + std::to_string(sizes.required() - eligible.size()) + ")");
  }
  Rng rng(derive_seed(seed, "partition"));
  shuffle(eligible, rng);

  Partition p;
  p.seed = seed;
  p.min_tokens = min_tokens;
  std::size_t cursor = 0;
  take(p.target_kb, eligible, cursor, sizes.target_kb);
  take(p.shadow_kb, eligible, cursor, sizes.shadow_kb);
  take(p.t_out, eligible, cursor, sizes.t_out);
  take(p.s_out, eligible, cursor, sizes.s_out);
  // Members are drawn from within each KB with their own shuffle.
  auto draw = [&](const std::vector<std::string>& kb, std::size_t n, std::string_view tag) {
    std::vector<std::string> pool = kb;
    Rng sub(derive_seed(seed, tag));
    shuffle(pool, sub);
    pool.resize(n);
    return pool;
  };
  p.t_in = draw(p.target_kb, sizes.t_in, "partition-t_in");
  p.s_in = draw(p.shadow_kb, sizes.s_in, "partition-s_in");
  p.validate();
  return p;
}

std::vector<rag::QaRecord> select(std::span<const rag::QaRecord> corpus, std::span<const std::string> ids) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].id, i);
  std::vector<rag::QaRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorKind::MissingArtifact, "record " + id + " not found in corpus");
    out.push_back(corpus[it->second]);
  }
  return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check_binary(scores, labels, "auc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(counts.pos);
  const double n = static_cast<double>(counts.neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check_binary(scores, labels, "roc_curve");
  const auto idx = descending_order(scores);
  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double t = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == t) {
      (labels[idx[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(counts.neg),
                     static_cast<double>(tp) / static_cast<double>(counts.pos), t});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
  }
  return area;
}

double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "balanced_accuracy: predictions and labels differ in length");
  }
  const auto counts = count_classes(labels, "balanced_accuracy");
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] != 0 && predictions[i] != 1) {
      throw Error(ErrorKind::InvalidArgument, "balanced_accuracy: predictions must be 0/1");
    }
    if (labels[i] == 1 && predictions[i] == 1) ++tp;
    if (labels[i] == 0 && predictions[i] == 0) ++tn;
  }
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(counts.pos) +
                static_cast<double>(tn) / static_cast<double>(counts.neg));
}

double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double target_fpr) {
  if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tpr_at_fpr: target outside [0,1]");
  double best = 0.0;
  for (const auto& pt : roc_curve(scores, labels)) {
    if (pt.fpr > target_fpr) break;
    best = pt.tpr;
  }
  return best;
}

nlohmann::json EvalReport::to_json() const {
  return {{"format", "budgetleak.eval_report"},
          {"version", 1},
          {"mode", mode},
          {"auc", auc},
          {"balanced_accuracy", balanced_accuracy},
          {"tpr_at_fpr", tpr_at_fpr},
          {"target_fpr", target_fpr},
          {"n_members", n_members},
          {"n_nonmembers", n_nonmembers},
          {"fingerprint", fingerprint}};
}

EvalReport EvalReport::from_json(const nlohmann::json& doc) {
  try {
    EvalReport r;
    r.mode = doc.at("mode").get<std::string>();
    r.auc = doc.at("auc").get<double>();
    r.balanced_accuracy = doc.at("balanced_accuracy").get<double>();
    r.tpr_at_fpr = doc.at("tpr_at_fpr").get<double>();
    r.target_fpr = doc.at("target_fpr").get<double>();
    r.n_members = doc.at("n_members").get<std::size_t>();
    r.n_nonmembers = doc.at("n_nonmembers").get<std::size_t>();
    r.fingerprint = doc.at("fingerprint").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed report: ") + e.what());
  }
}

std::string EvalReport::csv_header() {
  return "mode,auc,balanced_accuracy,tpr_at_fpr,target_fpr,n_members,n_nonmembers,fingerprint";
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << mode << ',' << auc << ',' << balanced_accuracy << ',' << tpr_at_fpr << ',' << target_fpr << ','
     << n_members << ',' << n_nonmembers << ',' << fingerprint;
  return os.str();
}

EvalReport evaluate(std::string mode, std::span<const double> scores, std::span<const int> predictions,
                    std::span<const int> labels, double target_fpr, std::string fingerprint) {
  const auto counts = check_binary(scores, labels, "evaluate");
  EvalReport r;
  r.mode = std::move(mode);
  r.auc = auc(scores, labels);
  r.balanced_accuracy = balanced_accuracy(predictions, labels);
  r.tpr_at_fpr = tpr_at_fpr(scores, labels, target_fpr);
  r.target_fpr = target_fpr;
  r.n_members = counts.pos;
  r.n_nonmembers = counts.neg;
  r.fingerprint = std::move(fingerprint);
  return r;
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> curve, std::string_view fingerprint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "# fingerprint: " << fingerprint << "\nfpr,tpr\n";
  for (const auto& p : curve) out << p.fpr << ',' << p.tpr << '\n';
}

}  // namespace budgetleak::eval
