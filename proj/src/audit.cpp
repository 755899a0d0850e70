// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "budgetleak/error.hpp"
#include "budgetleak/hashing.hpp"
#include "budgetleak/log.hpp"
#include "budgetleak/remote.hpp"
#include "budgetleak/response_cache.hpp"
#include "budgetleak/rng.hpp"
#include "budgetleak/text_metrics.hpp"

namespace budgetleak::audit {

using nlohmann::json;
using probing::MetricId;

namespace {

// Reads one config object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::Config, "config: " + where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::Config, "config: " + where(key) + " has the wrong type (" + it->dump() + ")");
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  void get_metric(const char* key, MetricId& out) {
    std::string name(metrics::to_string(out));
    get(key, name);
    const auto id = metrics::parse_metric(name);
    if (!id) throw Error(ErrorKind::Config, "config: " + where(key) + " names unknown metric '" + name + "'");
    out = *id;
  }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? ObjectReader(empty(), where(key)) : ObjectReader(*it, where(key));
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw Error(ErrorKind::Config, "config: unknown key " + where(item.key()));
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where(std::string_view key = {}) const {
    std::string p = path_.empty() ? std::string(key) : path_ + (key.empty() ? "" : "." + std::string(key));
    return p.empty() ? "<root>" : p;
  }

  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

std::string_view backend_name(Backend b) { return b == Backend::Synthetic ? "synthetic" : "remote"; }

std::string_view optimizer_name(attack::Optimizer o) { return o == attack::Optimizer::Adam ? "adam" : "sgd"; }

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json read_json_file(const std::filesystem::path& path, std::string_view stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::MissingArtifact,
                std::string(stage) + ": missing upstream artifact " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
}

void check_fingerprint(std::string_view found, std::string_view expected, const std::filesystem::path& artifact,
                       std::string_view stage) {
  if (found != expected) {
    throw Error(ErrorKind::FingerprintMismatch,
                std::string(stage) + ": " + artifact.string() + " was produced under config fingerprint " +
                    std::string(found) + " but the current config has fingerprint " + std::string(expected) +
                    "; re-run the upstream stages");
  }
}

eval::Partition read_partition(const AuditConfig& cfg, std::string_view fp, std::string_view stage) {
  const auto path = partition_file(cfg);
  const json doc = read_json_file(path, stage);
  check_fingerprint(doc.value("fingerprint", std::string()), fp, path, stage);
  return eval::Partition::from_json(doc);
}

probing::SequenceStore read_store(const AuditConfig& cfg, std::string_view which, std::string_view fp,
                                  std::string_view stage) {
  const auto path = sequences_file(cfg, which);
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::MissingArtifact, std::string(stage) + ": missing upstream artifact " + path.string() +
                                                " (run `probe " + std::string(which) + "` first)");
  }
  auto store = probing::read_sequences(path);
  check_fingerprint(store.fingerprint, fp, path, stage);
  if (store.sequences.empty()) throw Error(ErrorKind::InsufficientData, path.string() + " contains no sequences");
  return store;
}

std::shared_ptr<const Embedder> make_embedder(const AuditConfig& cfg) {
  if (cfg.embedder == "hashed-bow") return std::make_shared<HashedBowEmbedder>(cfg.embedder_dim);
  rag::RemoteEmbedderConfig rc;
  rc.endpoint.base_url = cfg.embedder_url;
  rc.endpoint.api_key = rag::api_key_from_env();
  rc.endpoint.max_in_flight = cfg.max_in_flight;
  rc.endpoint.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000.0));
  rc.model = cfg.embedder_model;
  rc.dim = cfg.embedder_dim;
  return std::make_shared<rag::RemoteEmbedder>(std::move(rc));
}

std::shared_ptr<rag::Generator> make_backend(const AuditConfig& cfg, std::span<const rag::QaRecord> corpus) {
  if (cfg.backend == Backend::Synthetic) {
    std::unordered_map<std::string, std::string> answers;
    answers.reserve(corpus.size());
    for (const auto& r : corpus) answers.emplace(rag::render_user_input(cfg.user_input, r), r.answer);
    return std::make_shared<rag::SyntheticGenerator>(cfg.synthetic, derive_seed(cfg.seed, "synthetic-generator"),
                                                     std::move(answers));
  }
  rag::RemoteGeneratorConfig rc;
  rc.endpoint.base_url = cfg.remote_url;
  rc.endpoint.api_key = rag::api_key_from_env();
  rc.endpoint.max_in_flight = cfg.max_in_flight;
  rc.endpoint.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000.0));
  rc.model = cfg.remote_model;
  rc.temperature = cfg.temperature;
  rc.top_p = cfg.top_p;
  return std::make_shared<rag::RemoteGenerator>(std::move(rc));
}

bool valid_which(std::string_view which) { return which == "target" || which == "shadow"; }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace

// --- config -------------------------------------------------------------------

std::string_view to_string(Mode mode) { return mode == Mode::P ? "P" : "Z"; }

Mode parse_mode(std::string_view name) {
  if (name == "P" || name == "p") return Mode::P;
  if (name == "Z" || name == "z") return Mode::Z;
  throw Error(ErrorKind::Config, "attack mode must be P or Z, got '" + std::string(name) + "'");
}

AuditConfig::AuditConfig() {
  const auto all = metrics::all_metrics();
  metrics.assign(all.begin(), all.end());
}

AuditConfig AuditConfig::synthetic_demo() {
  AuditConfig cfg;
  cfg.partition = {400, 400, 200, 200, 200, 200};
  cfg.synthetic_corpus.size = 1600;
  return cfg;
}

AuditConfig AuditConfig::from_json(const json& doc) {
  AuditConfig cfg;
  ObjectReader root(doc, "");
  root.get("seed", cfg.seed);
  {
    auto c = root.child("corpus");
    c.get("path", cfg.corpus_path);
    auto s = c.child("synthetic");
    s.get("size", cfg.synthetic_corpus.size);
    s.get("question_min_tokens", cfg.synthetic_corpus.question_min_tokens);
    s.get("question_max_tokens", cfg.synthetic_corpus.question_max_tokens);
    s.get("answer_min_tokens", cfg.synthetic_corpus.answer_min_tokens);
    s.get("answer_max_tokens", cfg.synthetic_corpus.answer_max_tokens);
    s.get("vocabulary", cfg.synthetic_corpus.vocabulary);
    s.get("seed", cfg.synthetic_corpus.seed);
    s.finish();
    c.finish();
  }
  {
    auto p = root.child("partition");
    p.get("target_kb", cfg.partition.target_kb);
    p.get("shadow_kb", cfg.partition.shadow_kb);
    p.get("t_in", cfg.partition.t_in);
    p.get("t_out", cfg.partition.t_out);
    p.get("s_in", cfg.partition.s_in);
    p.get("s_out", cfg.partition.s_out);
    p.get("min_tokens", cfg.min_tokens);
    p.finish();
  }
  {
    auto r = root.child("retriever");
    r.get("embedder", cfg.embedder);
    r.get("dim", cfg.embedder_dim);
    r.get("url", cfg.embedder_url);
    r.get("model", cfg.embedder_model);
    r.get("top_k", cfg.top_k);
    r.get("ideal", cfg.ideal_retriever);
    r.get("user_input", cfg.user_input);
    r.finish();
  }
  {
    auto g = root.child("generator");
    std::string backend(backend_name(cfg.backend));
    g.get("backend", backend);
    if (backend == "synthetic") {
      cfg.backend = Backend::Synthetic;
    } else if (backend == "remote") {
      cfg.backend = Backend::Remote;
    } else {
      throw Error(ErrorKind::Config, "config: generator.backend must be synthetic or remote, got '" + backend + "'");
    }
    auto s = g.child("synthetic");
    s.get("member_gain", cfg.synthetic.member_gain);
    s.get("nonmember_gain", cfg.synthetic.nonmember_gain);
    s.get("paraphrase_noise", cfg.synthetic.paraphrase_noise);
    s.get("filler_vocab_seed", cfg.synthetic.filler_vocab_seed);
    s.get("gain_jitter", cfg.synthetic.gain_jitter);
    s.get("function_word_rate", cfg.synthetic.function_word_rate);
    s.finish();
    g.get("url", cfg.remote_url);
    g.get("model", cfg.remote_model);
    g.get("temperature", cfg.temperature);
    g.get_optional("top_p", cfg.top_p);
    g.get("max_in_flight", cfg.max_in_flight);
    g.get("timeout_s", cfg.timeout_s);
    g.get("cache", cfg.cache_path);
    g.get("replay_only", cfg.replay_only);
    g.finish();
  }
  {
    auto s = root.child("schedule");
    s.get("kind", cfg.schedule);
    s.get("start", cfg.sweep_start);
    s.get("end", cfg.sweep_end);
    s.get("step", cfg.sweep_step);
    std::string bi(probing::to_string(cfg.bi_variant));
    s.get("bi_variant", bi);
    const auto v = probing::parse_bi_variant(bi);
    if (!v) throw Error(ErrorKind::Config, "config: schedule.bi_variant '" + bi + "' is unknown");
    cfg.bi_variant = *v;
    s.get("budgets", cfg.budgets);
    s.finish();
  }
  if (doc.contains("metrics")) {
    std::vector<std::string> names;
    root.get("metrics", names);
    cfg.metrics.clear();
    for (const auto& n : names) {
      const auto id = metrics::parse_metric(n);
      if (!id) throw Error(ErrorKind::Config, "config: metrics names unknown metric '" + n + "'");
      cfg.metrics.push_back(*id);
    }
  }
  {
    auto p = root.child("probe");
    p.get("repeats", cfg.repeats);
    p.get("adaptive_stop", cfg.adaptive_stop);
    p.finish();
  }
  {
    auto a = root.child("attack");
    std::string mode(to_string(cfg.mode));
    a.get("mode", mode);
    cfg.mode = parse_mode(mode);
    auto t = a.child("train");
    t.get("epochs", cfg.train.epochs);
    t.get("lr_start", cfg.train.lr_start);
    t.get("lr_end", cfg.train.lr_end);
    t.get("batch_size", cfg.train.batch_size);
    t.get("hidden_dim", cfg.train.hidden_dim);
    std::string opt(optimizer_name(cfg.train.optimizer));
    t.get("optimizer", opt);
    if (opt == "adam") {
      cfg.train.optimizer = attack::Optimizer::Adam;
    } else if (opt == "sgd") {
      cfg.train.optimizer = attack::Optimizer::Sgd;
    } else {
      throw Error(ErrorKind::Config, "config: attack.train.optimizer must be adam or sgd");
    }
    t.finish();
    auto f = a.child("fcm");
    f.get("clusters", cfg.fcm.clusters);
    f.get("fuzzifier", cfg.fcm.fuzzifier);
    f.get("tol", cfg.fcm.tol);
    f.get("max_iter", cfg.fcm.max_iter);
    f.finish();
    a.get_metric("semantic_metric", cfg.semantic_metric);
    a.get_metric("lexical_metric", cfg.lexical_metric);
    a.get("knn_k", cfg.knn_k);
    a.get("target_fpr", cfg.target_fpr);
    a.finish();
  }
  std::string out_dir = cfg.out_dir.string();
  root.get("out_dir", out_dir);
  cfg.out_dir = out_dir;
  root.get("concurrency", cfg.concurrency);
  root.get("resume", cfg.resume);
  root.finish();
  cfg.train.seed = cfg.seed;
  cfg.fcm.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

AuditConfig AuditConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, "config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, "config " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json AuditConfig::to_json() const {
  json metric_names = json::array();
  for (MetricId id : metrics) metric_names.push_back(metrics::to_string(id));
  json generator = {{"backend", backend_name(backend)},
                    {"synthetic",
                     {{"member_gain", synthetic.member_gain},
                      {"nonmember_gain", synthetic.nonmember_gain},
                      {"paraphrase_noise", synthetic.paraphrase_noise},
                      {"filler_vocab_seed", synthetic.filler_vocab_seed},
                      {"gain_jitter", synthetic.gain_jitter},
                      {"function_word_rate", synthetic.function_word_rate}}},
                    {"url", remote_url},
                    {"model", remote_model},
                    {"temperature", temperature},
                    {"top_p", top_p ? json(*top_p) : json(nullptr)},
                    {"max_in_flight", max_in_flight},
                    {"timeout_s", timeout_s},
                    {"cache", cache_path},
                    {"replay_only", replay_only}};
  return {{"seed", seed},
          {"corpus",
           {{"path", corpus_path},
            {"synthetic",
             {{"size", synthetic_corpus.size},
              {"question_min_tokens", synthetic_corpus.question_min_tokens},
              {"question_max_tokens", synthetic_corpus.question_max_tokens},
              {"answer_min_tokens", synthetic_corpus.answer_min_tokens},
              {"answer_max_tokens", synthetic_corpus.answer_max_tokens},
              {"vocabulary", synthetic_corpus.vocabulary},
              {"seed", synthetic_corpus.seed}}}}},
          {"partition",
           {{"target_kb", partition.target_kb},
            {"shadow_kb", partition.shadow_kb},
            {"t_in", partition.t_in},
            {"t_out", partition.t_out},
            {"s_in", partition.s_in},
            {"s_out", partition.s_out},
            {"min_tokens", min_tokens}}},
          {"retriever",
           {{"embedder", embedder},
            {"dim", embedder_dim},
            {"url", embedder_url},
            {"model", embedder_model},
            {"top_k", top_k},
            {"ideal", ideal_retriever},
            {"user_input", user_input}}},
          {"generator", generator},
          {"schedule",
           {{"kind", schedule},
            {"start", sweep_start},
            {"end", sweep_end},
            {"step", sweep_step},
            {"bi_variant", probing::to_string(bi_variant)},
            {"budgets", budgets}}},
          {"metrics", metric_names},
          {"probe", {{"repeats", repeats}, {"adaptive_stop", adaptive_stop}}},
          {"attack",
           {{"mode", to_string(mode)},
            {"train",
             {{"epochs", train.epochs},
              {"lr_start", train.lr_start},
              {"lr_end", train.lr_end},
              {"batch_size", train.batch_size},
              {"hidden_dim", train.hidden_dim},
              {"optimizer", optimizer_name(train.optimizer)}}},
            {"fcm",
             {{"clusters", fcm.clusters}, {"fuzzifier", fcm.fuzzifier}, {"tol", fcm.tol}, {"max_iter", fcm.max_iter}}},
            {"semantic_metric", metrics::to_string(semantic_metric)},
            {"lexical_metric", metrics::to_string(lexical_metric)},
            {"knn_k", knn_k},
            {"target_fpr", target_fpr}}},
          {"out_dir", out_dir.string()},
          {"concurrency", concurrency},
          {"resume", resume}};
}

void AuditConfig::validate() const {
  partition.validate();
  synthetic.validate();
  train.validate();
  fcm.validate();
  if (embedder != "hashed-bow" && embedder != "remote") {
    throw Error(ErrorKind::Config, "config: retriever.embedder must be hashed-bow or remote");
  }
  if (embedder_dim == 0) throw Error(ErrorKind::Config, "config: retriever.dim must be positive");
  if (embedder == "remote" && (embedder_url.empty() || embedder_model.empty())) {
    throw Error(ErrorKind::Config, "config: remote embedder needs retriever.url and retriever.model");
  }
  if (top_k < 1 || top_k > 20) throw Error(ErrorKind::Config, "config: retriever.top_k must be in [1, 20]");
  if (backend == Backend::Remote && (remote_url.empty() || remote_model.empty())) {
    throw Error(ErrorKind::Config, "config: remote generator needs generator.url and generator.model");
  }
  if (!(temperature >= 0.0) || (top_p && !(*top_p > 0.0 && *top_p <= 1.0))) {
    throw Error(ErrorKind::Config, "config: invalid decoding parameters");
  }
  if (max_in_flight < 1 || !(timeout_s > 0.0)) {
    throw Error(ErrorKind::Config, "config: max_in_flight and timeout_s must be positive");
  }
  if (schedule != "sweep" && schedule != "tri" && schedule != "bi" && schedule != "custom") {
    throw Error(ErrorKind::Config, "config: schedule.kind must be sweep, tri, bi or custom");
  }
  if (schedule == "sweep") probing::schedule_sweep(sweep_start, sweep_end, sweep_step);
  if (schedule == "custom") probing::schedule_custom(budgets);
  if (metrics.empty()) throw Error(ErrorKind::Config, "config: metrics must not be empty");
  std::set<MetricId> unique(metrics.begin(), metrics.end());
  if (unique.size() != metrics.size()) throw Error(ErrorKind::Config, "config: duplicate metric");
  if (!unique.count(semantic_metric) || !unique.count(lexical_metric)) {
    throw Error(ErrorKind::Config, "config: attack.semantic_metric and lexical_metric must be in metrics");
  }
  if (repeats < 1) throw Error(ErrorKind::Config, "config: probe.repeats must be >= 1");
  if (knn_k == 0) throw Error(ErrorKind::Config, "config: attack.knn_k must be >= 1");
  if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) throw Error(ErrorKind::Config, "config: attack.target_fpr outside [0,1]");
  if (concurrency == 0) throw Error(ErrorKind::Config, "config: concurrency must be >= 1");
  if (out_dir.empty()) throw Error(ErrorKind::Config, "config: out_dir must not be empty");
}

std::string AuditConfig::fingerprint() const {
  json j = to_json();
  j.erase("out_dir");
  j.erase("concurrency");
  j.erase("resume");
  j["generator"].erase("replay_only");
  j["attack"].erase("mode");
  return sha256_hex(j.dump()).substr(0, 16);
}

std::filesystem::path AuditConfig::cache_file() const {
  return cache_path.empty() ? out_dir / "cache.jsonl" : std::filesystem::path(cache_path);
}

// --- artifacts ----------------------------------------------------------------

std::filesystem::path partition_file(const AuditConfig& cfg) { return cfg.out_dir / "partition.json"; }
std::filesystem::path sequences_file(const AuditConfig& cfg, std::string_view which) {
  return cfg.out_dir / ("sequences_" + std::string(which) + ".jsonl");
}
std::filesystem::path partial_sequences_file(const AuditConfig& cfg, std::string_view which) {
  return cfg.out_dir / ("sequences_" + std::string(which) + ".partial.jsonl");
}
std::filesystem::path probe_stats_file(const AuditConfig& cfg, std::string_view which) {
  return cfg.out_dir / ("probe_stats_" + std::string(which) + ".json");
}
std::filesystem::path model_file(const AuditConfig& cfg) { return cfg.out_dir / "model_P.json"; }
std::filesystem::path clustering_file(const AuditConfig& cfg) { return cfg.out_dir / "clustering_Z.json"; }
std::filesystem::path scores_file(const AuditConfig& cfg) {
  return cfg.out_dir / ("scores_" + std::string(to_string(cfg.mode)) + ".csv");
}
std::filesystem::path report_file(const AuditConfig& cfg) {
  return cfg.out_dir / ("report_" + std::string(to_string(cfg.mode)) + ".json");
}
std::filesystem::path report_csv_file(const AuditConfig& cfg) {
  return cfg.out_dir / ("report_" + std::string(to_string(cfg.mode)) + ".csv");
}
std::filesystem::path roc_file(const AuditConfig& cfg) {
  return cfg.out_dir / ("roc_" + std::string(to_string(cfg.mode)) + ".csv");
}

void write_scores(const std::filesystem::path& path, const AttackScores& s) {
  std::ostringstream os;
  os.precision(17);
  os << "# fingerprint: " << s.fingerprint << "\nsample_id,score,prediction,label\n";
  for (std::size_t i = 0; i < s.sample_ids.size(); ++i) {
    os << csv_field(s.sample_ids[i]) << ',' << s.scores[i] << ',' << s.predictions[i] << ',' << s.labels[i] << '\n';
  }
  write_text_atomic(path, os.str());
}

AttackScores read_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "eval: missing upstream artifact " + path.string() + " (run attack first)");
  AttackScores s;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# fingerprint:", 0) == 0) {
      s.fingerprint = line.substr(14);
      s.fingerprint.erase(0, s.fingerprint.find_first_not_of(' '));
      continue;
    }
    if (line[0] == '#') continue;
    if (!header) {
      if (line != "sample_id,score,prediction,label") {
        throw Error(ErrorKind::InvalidArgument, path.string() + ": unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 4) {
      throw Error(ErrorKind::InvalidArgument, path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    }
    try {
      s.sample_ids.push_back(f[0]);
      s.scores.push_back(std::stod(f[1]));
      s.predictions.push_back(std::stoi(f[2]));
      s.labels.push_back(std::stoi(f[3]));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  if (!header) throw Error(ErrorKind::InvalidArgument, path.string() + ": no header row");
  return s;
}

nlohmann::json IngestSummary::to_json() const {
  return {{"records", records}, {"eligible", eligible}, {"mean_tokens", mean_tokens},
          {"mean_answer_tokens", mean_answer_tokens}};
}

nlohmann::json ProbeStats::to_json(std::string_view fingerprint) const {
  return {{"which", which},
          {"targets", targets},
          {"probed", probed},
          {"dropped", dropped},
          {"resumed", resumed},
          {"generator_calls", generator_calls},
          {"cache_hits", cache_hits},
          {"fingerprint", fingerprint}};
}

// --- stages -------------------------------------------------------------------

std::vector<rag::QaRecord> load_corpus(const AuditConfig& cfg) {
  if (cfg.corpus_path.empty()) return rag::synthetic_corpus(cfg.synthetic_corpus);
  return rag::load_corpus(cfg.corpus_path);
}

probing::BudgetSchedule schedule_for(const AuditConfig& cfg, std::span<const rag::QaRecord> shadow_kb) {
  if (cfg.schedule == "sweep") return probing::schedule_sweep(cfg.sweep_start, cfg.sweep_end, cfg.sweep_step);
  if (cfg.schedule == "custom") return probing::schedule_custom(cfg.budgets);
  const int mean = probing::mean_answer_tokens(shadow_kb);
  if (cfg.schedule == "tri") return probing::schedule_tri(mean);
  return probing::schedule_bi(mean, cfg.bi_variant);
}

IngestSummary cmd_ingest(const AuditConfig& cfg) {
  cfg.validate();
  const auto corpus = load_corpus(cfg);
  IngestSummary s;
  s.records = corpus.size();
  double tokens = 0.0, answer_tokens = 0.0;
  for (const auto& r : corpus) {
    const auto n = metrics::count_tokens(r.text);
    tokens += static_cast<double>(n);
    answer_tokens += static_cast<double>(metrics::count_tokens(r.answer));
    if (n >= cfg.min_tokens) ++s.eligible;
  }
  if (!corpus.empty()) {
    s.mean_tokens = tokens / static_cast<double>(corpus.size());
    s.mean_answer_tokens = answer_tokens / static_cast<double>(corpus.size());
  }
  json doc = s.to_json();
  doc["fingerprint"] = cfg.fingerprint();
  write_text_atomic(cfg.out_dir / "ingest.json", doc.dump(2) + "\n");
  log::info("ingest", doc);
  return s;
}

eval::Partition cmd_partition(const AuditConfig& cfg) {
  cfg.validate();
  const auto corpus = load_corpus(cfg);
  auto p = eval::partition(corpus, cfg.partition, cfg.min_tokens, cfg.seed);
  json doc = p.to_json();
  doc["fingerprint"] = cfg.fingerprint();
  write_text_atomic(partition_file(cfg), doc.dump() + "\n");
  log::info("partition", {{"target_kb", p.target_kb.size()},
                          {"shadow_kb", p.shadow_kb.size()},
                          {"eligible_pool", corpus.size()},
                          {"path", partition_file(cfg).string()}});
  return p;
}

ProbeStats cmd_probe(const AuditConfig& cfg, std::string_view which) {
  cfg.validate();
  if (!valid_which(which)) throw Error(ErrorKind::InvalidArgument, "probe: expected 'target' or 'shadow'");
  const std::string fp = cfg.fingerprint();
  const auto corpus = load_corpus(cfg);
  const auto part = read_partition(cfg, fp, "probe");
  const bool target = which == "target";

  const auto embedder = make_embedder(cfg);
  auto kb = std::make_shared<const rag::KnowledgeBase>(
      eval::select(corpus, target ? part.target_kb : part.shadow_kb), embedder);
  const auto schedule = schedule_for(cfg, eval::select(corpus, part.shadow_kb));

  std::vector<rag::QaRecord> targets = eval::select(corpus, target ? part.t_in : part.s_in);
  const std::size_t n_in = targets.size();
  for (auto& r : eval::select(corpus, target ? part.t_out : part.s_out)) targets.push_back(std::move(r));

  if (cfg.replay_only && !std::filesystem::exists(cfg.cache_file())) {
    throw Error(ErrorKind::MissingArtifact, "probe: replay_only is set but the cache " + cfg.cache_file().string() +
                                                " does not exist");
  }
  auto cache = std::make_shared<rag::ResponseCache>(cfg.cache_file());
  auto backend = make_backend(cfg, corpus);
  std::shared_ptr<rag::Generator> generator;
  std::shared_ptr<rag::CachingGenerator> caching;
  if (cfg.replay_only) {
    generator = std::make_shared<rag::ReplayGenerator>(cache, backend->fingerprint());
  } else {
    caching = std::make_shared<rag::CachingGenerator>(backend, cache);
    generator = caching;
  }

  probing::RagPipeline pipeline;
  pipeline.kb = kb;
  pipeline.generator = generator;
  pipeline.top_k = cfg.top_k;
  pipeline.ideal_retriever = cfg.ideal_retriever;
  pipeline.user_input_template = cfg.user_input;
  probing::ProbeOptions options;
  options.repeats = cfg.repeats;
  options.adaptive_stop = cfg.adaptive_stop;
  options.concurrency = cfg.concurrency;

  ProbeStats stats;
  stats.which = std::string(which);
  stats.targets = targets.size();

  // Completed samples from an interrupted run.
  const auto partial = partial_sequences_file(cfg, which);
  std::unordered_map<std::string, probing::MultiMetricSequence> done;
  if (cfg.resume && std::filesystem::exists(partial)) {
    std::ifstream in(partial, std::ios::binary);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) lines.push_back(std::move(line));
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string line_fp;
      probing::MultiMetricSequence seq;
      try {
        seq = probing::sequence_from_json_line(lines[i], &line_fp);
      } catch (const Error&) {
        if (i + 1 == lines.size()) {
          log::warn("partial_store_torn_line", {{"path", partial.string()}});
          break;
        }
        throw;
      }
      check_fingerprint(line_fp, fp, partial, "probe --resume");
      done.insert_or_assign(seq.sample_id, std::move(seq));
    }
  }
  {
    std::ostringstream os;
    for (const auto& r : targets) {
      if (const auto it = done.find(r.id); it != done.end()) os << probing::sequence_to_json_line(it->second, fp) << '\n';
    }
    write_text_atomic(partial, os.str());
  }
  stats.resumed = done.size();

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!done.count(targets[i].id)) pending.push_back(i);
  }
  log::info("probe_start", {{"which", which},
                            {"targets", targets.size()},
                            {"pending", pending.size()},
                            {"budgets", schedule.budgets},
                            {"fingerprint", fp}});

  std::ofstream partial_out(partial, std::ios::binary | std::ios::app);
  if (!partial_out) throw Error(ErrorKind::Io, "cannot append to " + partial.string());
  const std::size_t chunk = std::max<std::size_t>(32, 4 * cfg.concurrency);
  for (std::size_t start = 0; start < pending.size(); start += chunk) {
    const std::size_t end = std::min(pending.size(), start + chunk);
    std::vector<rag::QaRecord> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(targets[pending[k]]);
    auto results = probing::probe_many(batch, pipeline, schedule, cfg.metrics, *embedder, options);
    for (std::size_t k = 0; k < results.size(); ++k) {
      if (!results[k]) {
        ++stats.dropped;
        continue;
      }
      auto& seq = *results[k];
      seq.label = pending[start + k] < n_in ? 1 : 0;
      partial_out << probing::sequence_to_json_line(seq, fp) << '\n';
      done.insert_or_assign(seq.sample_id, std::move(seq));
    }
    partial_out.flush();
    log::debug("probe_progress", {{"which", which}, {"completed", done.size()}, {"targets", targets.size()}});
  }
  partial_out.close();

  std::vector<probing::MultiMetricSequence> ordered;
  ordered.reserve(done.size());
  for (const auto& r : targets) {
    if (const auto it = done.find(r.id); it != done.end()) ordered.push_back(it->second);
  }
  probing::write_sequences(sequences_file(cfg, which), ordered, fp);
  std::filesystem::remove(partial);

  stats.probed = ordered.size();
  if (caching) {
    stats.generator_calls = caching->backend_calls();
    stats.cache_hits = caching->hits();
  }
  write_text_atomic(probe_stats_file(cfg, which), stats.to_json(fp).dump(2) + "\n");
  log::info("probe_done", stats.to_json(fp));
  if (ordered.empty()) throw Error(ErrorKind::Probe, "probe: every sample failed");
  return stats;
}

attack::AttentionLstmClassifier cmd_train(const AuditConfig& cfg, attack::TrainReport* report) {
  cfg.validate();
  const std::string fp = cfg.fingerprint();
  auto store = read_store(cfg, "shadow", fp, "train");
  const auto data = attack::AttackDataset::from_labelled(std::move(store.sequences));
  attack::TrainReport local;
  attack::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  auto model = attack::train_p(data, tc, report ? report : &local);
  model.save(model_file(cfg), fp);
  const auto& losses = (report ? report : &local)->epoch_loss;
  log::info("train_done", {{"samples", data.sequences.size()},
                           {"epochs", tc.epochs},
                           {"final_loss", losses.empty() ? 0.0 : losses.back()},
                           {"path", model_file(cfg).string()}});
  return model;
}

AttackScores cmd_attack(const AuditConfig& cfg) {
  cfg.validate();
  const std::string fp = cfg.fingerprint();
  const auto store = read_store(cfg, "target", fp, "attack");
  AttackScores out;
  out.fingerprint = fp;
  for (const auto& s : store.sequences) {
    out.sample_ids.push_back(s.sample_id);
    if (!s.label) throw Error(ErrorKind::InvalidArgument, "attack: target sequence " + s.sample_id + " lacks a label");
    out.labels.push_back(*s.label);
  }

  if (cfg.mode == Mode::P) {
    const auto path = model_file(cfg);
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorKind::MissingArtifact, "attack: missing upstream artifact " + path.string() + " (run train first)");
    }
    std::string model_fp;
    const auto model = attack::AttentionLstmClassifier::load(path, &model_fp);
    check_fingerprint(model_fp, fp, path, "attack");
    for (const auto& s : store.sequences) {
      const double p = model.predict(s);
      out.scores.push_back(p);
      out.predictions.push_back(p > 0.5 ? 1 : 0);
    }
  } else {
    std::vector<attack::FeatureVector> features;
    std::vector<double> quality;
    for (const auto& s : store.sequences) {
      features.push_back(probing::to_feature_vector(s, cfg.semantic_metric, cfg.lexical_metric));
      quality.push_back(s.at(*s.metric_index(cfg.lexical_metric), s.cols() - 1));
    }
    const auto scaler = attack::FeatureScaler::fit(features, 2);
    const auto scaled = scaler.apply(features);
    attack::FcmOptions opts = cfg.fcm;
    opts.seed = cfg.seed;
    auto fc = attack::fcm_cluster(scaled, opts);
    fc.member_cluster = static_cast<int>(attack::label_member_cluster(fc, quality));
    for (const auto& z : attack::infer_z(fc)) {
      out.scores.push_back(z.score);
      out.predictions.push_back(z.label);
    }
    json doc = fc.to_json();
    doc["sample_ids"] = out.sample_ids;
    doc["scaler"] = {{"blocks", scaler.blocks}, {"mean", scaler.mean}, {"std", scaler.stddev}};
    doc["fingerprint"] = fp;
    write_text_atomic(clustering_file(cfg), doc.dump() + "\n");
  }
  write_scores(scores_file(cfg), out);
  log::info("attack_done", {{"mode", to_string(cfg.mode)}, {"samples", out.scores.size()},
                            {"path", scores_file(cfg).string()}});
  return out;
}

eval::EvalReport cmd_eval(const AuditConfig& cfg) {
  cfg.validate();
  const std::string fp = cfg.fingerprint();
  const auto path = scores_file(cfg);
  const auto scores = read_scores(path);
  check_fingerprint(scores.fingerprint, fp, path, "eval");
  const auto seq_path = sequences_file(cfg, "target");
  if (std::filesystem::exists(seq_path)) {
    check_fingerprint(probing::read_sequences(seq_path).fingerprint, fp, seq_path, "eval");
  }
  auto report = eval::evaluate(std::string(to_string(cfg.mode)), scores.scores, scores.predictions, scores.labels,
                               cfg.target_fpr, fp);
  json doc = report.to_json();
  write_text_atomic(report_file(cfg), doc.dump(2) + "\n");
  write_text_atomic(report_csv_file(cfg), eval::EvalReport::csv_header() + "\n" + report.csv_row() + "\n");
  eval::write_roc_csv(roc_file(cfg), eval::roc_curve(scores.scores, scores.labels), fp);
  log::info("eval_done", doc);
  return report;
}

DemoResult cmd_synth_demo(const AuditConfig& base) {
  if (base.backend != Backend::Synthetic) {
    throw Error(ErrorKind::Config, "synth-demo requires generator.backend = synthetic");
  }
  AuditConfig cfg = base;
  DemoResult r;
  cmd_partition(cfg);
  r.shadow = cmd_probe(cfg, "shadow");
  r.target = cmd_probe(cfg, "target");
  cmd_train(cfg);
  cfg.mode = Mode::P;
  cmd_attack(cfg);
  r.p = cmd_eval(cfg);
  cfg.mode = Mode::Z;
  cmd_attack(cfg);
  r.z = cmd_eval(cfg);
  return r;
}

}  // namespace budgetleak::audit
