// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/probing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "budgetleak/error.hpp"
#include "budgetleak/log.hpp"
#include "budgetleak/worker_pool.hpp"

namespace budgetleak::probing {

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Sweep: return "sweep";
    case ScheduleKind::Tri: return "tri";
    case ScheduleKind::Bi: return "bi";
    case ScheduleKind::Custom: return "custom";
  }
  return "?";
}

std::string_view to_string(BiVariant variant) {
  switch (variant) {
    case BiVariant::MinMean: return "MinMean";
    case BiVariant::MinMax: return "MinMax";
    case BiVariant::MeanMax: return "MeanMax";
  }
  return "?";
}

std::optional<BiVariant> parse_bi_variant(std::string_view name) {
  for (auto v : {BiVariant::MinMean, BiVariant::MinMax, BiVariant::MeanMax}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

void BudgetSchedule::validate() const {
  if (budgets.empty()) throw Error(ErrorKind::InvalidArgument, "budget schedule is empty");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 1) throw Error(ErrorKind::InvalidArgument, "budget schedule: budgets must be >= 1");
    if (i > 0 && budgets[i] <= budgets[i - 1]) {
      throw Error(ErrorKind::InvalidArgument, "budget schedule: budgets must be strictly increasing");
    }
  }
}

BudgetSchedule schedule_sweep(int start, int end, int step) {
  if (start < 1 || step < 1 || end < start) {
    throw Error(ErrorKind::InvalidArgument, "schedule_sweep: need start >= 1, step >= 1, end >= start");
  }
  BudgetSchedule s{{}, ScheduleKind::Sweep};
  for (long b = start; b <= end; b += step) s.budgets.push_back(static_cast<int>(b));
  return s;
}

BudgetSchedule schedule_tri(int mean_answer_tokens) {
  if (mean_answer_tokens <= 10) {
    throw Error(ErrorKind::InvalidArgument, "schedule_tri: mean answer length must exceed 10 tokens, got " +
                                                std::to_string(mean_answer_tokens));
  }
  return {{10, mean_answer_tokens, 2 * mean_answer_tokens}, ScheduleKind::Tri};
}

BudgetSchedule schedule_bi(int mean_answer_tokens, BiVariant variant) {
  const auto tri = schedule_tri(mean_answer_tokens).budgets;
  switch (variant) {
    case BiVariant::MinMean: return {{tri[0], tri[1]}, ScheduleKind::Bi};
    case BiVariant::MinMax: return {{tri[0], tri[2]}, ScheduleKind::Bi};
    case BiVariant::MeanMax: return {{tri[1], tri[2]}, ScheduleKind::Bi};
  }
  throw Error(ErrorKind::InvalidArgument, "schedule_bi: unknown variant");
}

BudgetSchedule schedule_custom(std::vector<int> budgets) {
  BudgetSchedule s{std::move(budgets), ScheduleKind::Custom};
  s.validate();
  return s;
}

int mean_answer_tokens(std::span<const rag::QaRecord> records) {
  if (records.empty()) throw Error(ErrorKind::InvalidArgument, "mean_answer_tokens: no records");
  double total = 0.0;
  for (const auto& r : records) total += static_cast<double>(metrics::count_tokens(r.answer));
  return static_cast<int>(std::lround(total / static_cast<double>(records.size())));
}

std::optional<std::size_t> MultiMetricSequence::metric_index(MetricId id) const {
  auto it = std::find(metric_names.begin(), metric_names.end(), id);
  if (it == metric_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - metric_names.begin());
}

void MultiMetricSequence::validate() const {
  if (metric_names.empty()) throw Error(ErrorKind::InvalidArgument, "sequence " + sample_id + ": no metrics");
  BudgetSchedule{budgets, ScheduleKind::Custom}.validate();
  if (values.size() != rows() * cols()) {
    throw Error(ErrorKind::DimensionMismatch, "sequence " + sample_id + ": values do not match m x n");
  }
  for (std::size_t m = 0; m < rows(); ++m) {
    const auto [lo, hi] = metrics::metric_range(metric_names[m]);
    for (double v : row(m)) {
      if (!std::isfinite(v) || v < lo || v > hi) {
        throw Error(ErrorKind::InvalidArgument, "sequence " + sample_id + ": value out of range for " +
                                                    std::string(metrics::to_string(metric_names[m])));
      }
    }
  }
  if (label && *label != 0 && *label != 1) {
    throw Error(ErrorKind::InvalidArgument, "sequence " + sample_id + ": label must be 0 or 1");
  }
}

FeatureVector to_feature_vector(const MultiMetricSequence& seq, MetricId semantic, MetricId lexical) {
  const auto si = seq.metric_index(semantic);
  const auto li = seq.metric_index(lexical);
  if (!si || !li) {
    throw Error(ErrorKind::InvalidArgument, "to_feature_vector: sequence " + seq.sample_id + " lacks metric " +
                                                std::string(metrics::to_string(!si ? semantic : lexical)));
  }
  FeatureVector fv{seq.sample_id, {}};
  fv.values.reserve(2 * seq.cols());
  for (double v : seq.row(*si)) fv.values.push_back(v);
  for (double v : seq.row(*li)) fv.values.push_back(v);
  return fv;
}

std::vector<double> rate_of_change(std::span<const double> row) {
  if (row.size() < 2) throw Error(ErrorKind::InvalidArgument, "rate_of_change: need at least 2 budgets");
  std::vector<double> diffs(row.size() - 1);
  for (std::size_t i = 0; i + 1 < row.size(); ++i) diffs[i] = row[i + 1] - row[i];
  return diffs;
}

double cumulative_fluctuation(std::span<const double> row) {
  double total = 0.0;
  for (double d : rate_of_change(row)) total += std::abs(d);
  return total;
}

std::vector<double> cross_metric_correlation(const MultiMetricSequence& seq) {
  const std::size_t m = seq.rows();
  const std::size_t n = seq.cols();
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "cross_metric_correlation: need at least 2 budgets");
  std::vector<std::vector<double>> centered(m, std::vector<double>(n));
  std::vector<double> norms(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const auto row = seq.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      centered[r][j] = row[j] - mean;
      norms[r] += centered[r][j] * centered[r][j];
    }
    // A constant row has zero variance even when rounding leaves residue.
    const bool constant = std::all_of(row.begin(), row.end(), [&](double v) { return v == row[0]; });
    norms[r] = constant ? 0.0 : std::sqrt(norms[r]);
  }
  std::vector<double> corr(m * m, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a; b < m; ++b) {
      double value = 0.0;
      if (norms[a] > 0.0 && norms[b] > 0.0) {
        if (a == b) {
          value = 1.0;
        } else {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += centered[a][j] * centered[b][j];
          value = std::clamp(dot / (norms[a] * norms[b]), -1.0, 1.0);
        }
      }
      corr[a * m + b] = value;
      corr[b * m + a] = value;
    }
  }
  return corr;
}

std::vector<std::string> RagPipeline::context_for(const rag::QaRecord& target) const {
  if (!kb) throw Error(ErrorKind::InvalidArgument, "RAG pipeline has no knowledge base");
  const auto records = ideal_retriever ? rag::retrieve_ideal(target, *kb, top_k)
                                       : rag::retrieve(rag::render_user_input(user_input_template, target), *kb, top_k);
  std::vector<std::string> context;
  context.reserve(records.size());
  for (const auto& r : records) context.push_back(r.text);
  return context;
}

namespace {

struct PreparedTarget {
  rag::GenerationRequest request;  // budget filled per task
  metrics::ReferenceText reference;
  std::size_t answer_tokens = 0;
};

PreparedTarget prepare(const rag::QaRecord& target, const RagPipeline& rag, bool need_embedding,
                       const Embedder& embedder) {
  PreparedTarget p;
  p.request.query = rag::render_user_input(rag.user_input_template, target);
  p.request.context = rag.context_for(target);
  p.reference = metrics::prepare_reference(target.answer, need_embedding ? &embedder : nullptr);
  p.answer_tokens = p.reference.tokens.size();
  return p;
}

struct Scored {
  std::vector<double> values;
  bool truncated = false;
};

Scored query_and_score(const PreparedTarget& p, int budget, const RagPipeline& rag,
                       std::span<const MetricId> metric_set, const Embedder& embedder) {
  rag::GenerationRequest request = p.request;
  request.budget = budget;
  rag::ProbeResponse response = rag.generator->generate(request);
  if (rag.transform) response.text = rag.transform(response.text);
  return {metrics::score_against(response.text, p.reference, embedder, metric_set), response.truncated};
}

void check_inputs(const RagPipeline& rag, const BudgetSchedule& schedule, std::span<const MetricId> metric_set,
                  const ProbeOptions& options) {
  schedule.validate();
  if (metric_set.empty()) throw Error(ErrorKind::InvalidArgument, "probe: metric set is empty");
  if (!rag.generator) throw Error(ErrorKind::InvalidArgument, "probe: RAG pipeline has no generator");
  if (options.repeats < 1) throw Error(ErrorKind::InvalidArgument, "probe: repeats must be >= 1");
}

// Averages repeat values into one m x n matrix (row-major by metric).
MultiMetricSequence assemble(const rag::QaRecord& target, const BudgetSchedule& schedule,
                             std::span<const MetricId> metric_set,
                             const std::vector<std::vector<std::vector<double>>>& per_budget) {
  MultiMetricSequence seq;
  seq.sample_id = target.id;
  seq.metric_names.assign(metric_set.begin(), metric_set.end());
  seq.budgets = schedule.budgets;
  const std::size_t m = metric_set.size();
  const std::size_t n = schedule.size();
  seq.values.assign(m * n, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    const auto& reps = per_budget[b];
    for (std::size_t k = 0; k < m; ++k) {
      double sum = 0.0;
      for (const auto& r : reps) sum += r[k];
      seq.values[k * n + b] = sum / static_cast<double>(reps.size());
    }
  }
  seq.validate();
  return seq;
}

bool needs_embedding(std::span<const MetricId> metric_set) {
  return std::find(metric_set.begin(), metric_set.end(), MetricId::Cosine) != metric_set.end();
}

// Sequential per-budget loop for one sample, used for adaptive stopping.
std::vector<std::vector<std::vector<double>>> probe_sequential(const PreparedTarget& p, const RagPipeline& rag,
                                                               const BudgetSchedule& schedule,
                                                               std::span<const MetricId> metric_set,
                                                               const Embedder& embedder,
                                                               const ProbeOptions& options,
                                                               const std::string& sample_id) {
  std::vector<std::vector<std::vector<double>>> per_budget(schedule.size());
  std::optional<std::size_t> reuse_from;
  for (std::size_t b = 0; b < schedule.size(); ++b) {
    if (reuse_from) {
      per_budget[b] = per_budget[*reuse_from];
      continue;
    }
    bool all_natural = true;
    for (int r = 0; r < options.repeats; ++r) {
      try {
        Scored s = query_and_score(p, schedule.budgets[b], rag, metric_set, embedder);
        all_natural = all_natural && !s.truncated;
        per_budget[b].push_back(std::move(s.values));
      } catch (const Error& e) {
        throw ProbeError(sample_id, schedule.budgets[b], "probe failed for sample " + sample_id + " at budget " +
                                                             std::to_string(schedule.budgets[b]) + ": " + e.what());
      }
    }
    if (options.adaptive_stop && all_natural &&
        static_cast<std::size_t>(schedule.budgets[b]) >= 2 * p.answer_tokens) {
      reuse_from = b;
    }
  }
  return per_budget;
}

}  // namespace

MultiMetricSequence probe(const rag::QaRecord& target, const RagPipeline& rag, const BudgetSchedule& schedule,
                          std::span<const MetricId> metric_set, const Embedder& embedder,
                          const ProbeOptions& options) {
  check_inputs(rag, schedule, metric_set, options);
  const PreparedTarget p = prepare(target, rag, needs_embedding(metric_set), embedder);
  return assemble(target, schedule, metric_set,
                  probe_sequential(p, rag, schedule, metric_set, embedder, options, target.id));
}

std::vector<std::optional<MultiMetricSequence>> probe_many(std::span<const rag::QaRecord> targets,
                                                           const RagPipeline& rag,
                                                           const BudgetSchedule& schedule,
                                                           std::span<const MetricId> metric_set,
                                                           const Embedder& embedder,
                                                           const ProbeOptions& options) {
  check_inputs(rag, schedule, metric_set, options);
  const bool embed = needs_embedding(metric_set);
  const std::size_t n_targets = targets.size();
  const std::size_t n_budgets = schedule.size();
  const auto reps = static_cast<std::size_t>(options.repeats);

  std::vector<PreparedTarget> prepared(n_targets);
  run_indexed(n_targets, options.concurrency,
              [&](std::size_t t) { prepared[t] = prepare(targets[t], rag, embed, embedder); });

  // results[t][b][r] = metric values of repeat r.
  std::vector<std::vector<std::vector<std::vector<double>>>> results(
      n_targets, std::vector<std::vector<std::vector<double>>>(n_budgets, std::vector<std::vector<double>>(reps)));
  auto failed = std::make_unique<std::atomic<bool>[]>(n_targets);

  auto report_failure = [&](std::size_t t, int budget, const std::exception& e) {
    if (!failed[t].exchange(true)) {
      log::warn("probe.sample_dropped",
                {{"sample_id", targets[t].id}, {"budget", budget}, {"error", e.what()}});
    }
  };

  if (options.adaptive_stop) {
    run_indexed(n_targets, options.concurrency, [&](std::size_t t) {
      try {
        auto per_budget = probe_sequential(prepared[t], rag, schedule, metric_set, embedder, options, targets[t].id);
        results[t] = std::move(per_budget);
      } catch (const ProbeError& e) {
        report_failure(t, e.budget(), e);
      }
    });
  } else {
    const std::size_t tasks = n_targets * n_budgets * reps;
    run_indexed(tasks, options.concurrency, [&](std::size_t task) {
      const std::size_t t = task / (n_budgets * reps);
      const std::size_t b = (task / reps) % n_budgets;
      const std::size_t r = task % reps;
      if (failed[t].load()) return;
      try {
        results[t][b][r] = query_and_score(prepared[t], schedule.budgets[b], rag, metric_set, embedder).values;
      } catch (const Error& e) {
        report_failure(t, schedule.budgets[b], e);
      }
    });
  }

  std::vector<std::optional<MultiMetricSequence>> out(n_targets);
  for (std::size_t t = 0; t < n_targets; ++t) {
    if (!failed[t].load()) out[t] = assemble(targets[t], schedule, metric_set, results[t]);
  }
  return out;
}

std::string sequence_to_json_line(const MultiMetricSequence& seq, std::string_view fingerprint) {
  nlohmann::json names = nlohmann::json::array();
  for (MetricId id : seq.metric_names) names.push_back(metrics::to_string(id));
  nlohmann::json obj = {{"sample_id", seq.sample_id},
                        {"budgets", seq.budgets},
                        {"metric_names", names},
                        {"values", seq.values},
                        {"label", seq.label ? nlohmann::json(*seq.label) : nlohmann::json(nullptr)},
                        {"fingerprint", fingerprint}};
  return obj.dump();
}

MultiMetricSequence sequence_from_json_line(std::string_view line, std::string* fingerprint) {
  MultiMetricSequence seq;
  try {
    const auto obj = nlohmann::json::parse(line);
    seq.sample_id = obj.at("sample_id").get<std::string>();
    seq.budgets = obj.at("budgets").get<std::vector<int>>();
    for (const auto& name : obj.at("metric_names")) {
      const auto id = metrics::parse_metric(name.get<std::string>());
      if (!id) throw Error(ErrorKind::InvalidArgument, "unknown metric '" + name.get<std::string>() + "'");
      seq.metric_names.push_back(*id);
    }
    seq.values = obj.at("values").get<std::vector<double>>();
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) seq.label = it->get<int>();
    if (fingerprint) *fingerprint = obj.value("fingerprint", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed sequence record: ") + e.what());
  }
  seq.validate();
  return seq;
}

void write_sequences(const std::filesystem::path& path, std::span<const MultiMetricSequence> seqs,
                     std::string_view fingerprint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write sequence store " + tmp.string());
    for (const auto& s : seqs) out << sequence_to_json_line(s, fingerprint) << '\n';
    if (!out) throw Error(ErrorKind::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

SequenceStore read_sequences(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "sequence store not found: " + path.string());
  SequenceStore store;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string fp;
    store.sequences.push_back(sequence_from_json_line(line, &fp));
    if (store.sequences.size() == 1) {
      store.fingerprint = fp;
    } else if (fp != store.fingerprint) {
      throw Error(ErrorKind::FingerprintMismatch, path.string() + ": mixed fingerprints within one store");
    }
  }
  return store;
}

}  // namespace budgetleak::probing
