// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "budgetleak/error.hpp"
#include "budgetleak/kernels.hpp"
#include "budgetleak/text_metrics.hpp"

namespace budgetleak::rag {

namespace {

std::string required_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorKind::InvalidArgument,
                "corpus line " + std::to_string(line) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

std::vector<QaRecord> parse_corpus(std::string_view jsonl) {
  std::vector<QaRecord> records;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const std::size_t nl = jsonl.find('\n', pos);
    const std::string_view line =
        jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::InvalidArgument,
                  "corpus line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorKind::InvalidArgument, "corpus line " + std::to_string(line_no) + ": not an object");
    }
    QaRecord r;
    if (auto it = obj.find("id"); it != obj.end() && it->is_number_integer()) {
      r.id = std::to_string(it->get<long long>());
    } else {
      r.id = required_string(obj, "id", line_no);
    }
    r.question = required_string(obj, "question", line_no);
    r.answer = required_string(obj, "answer", line_no);
    if (auto it = obj.find("text"); it != obj.end() && !it->is_null()) {
      r.text = required_string(obj, "text", line_no);
    } else {
      r.text = r.question + " " + r.answer;
    }
    if (!seen.insert(r.id).second) {
      throw Error(ErrorKind::InvalidArgument,
                  "corpus line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<QaRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

void save_corpus(const std::filesystem::path& path, std::span<const QaRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write corpus file " + path.string());
  for (const auto& r : records) {
    nlohmann::json obj = {{"id", r.id}, {"question", r.question}, {"answer", r.answer}, {"text", r.text}};
    out << obj.dump() << '\n';
  }
}

KnowledgeBase::KnowledgeBase(std::vector<QaRecord> records, std::shared_ptr<const Embedder> embedder)
    : records_(std::move(records)), embedder_(std::move(embedder)) {
  if (!embedder_) throw Error(ErrorKind::InvalidArgument, "KnowledgeBase: null embedder");
  embedder_id_ = embedder_->id();
  dim_ = embedder_->dim();
  matrix_.resize(records_.size() * dim_);
  norms_.resize(records_.size());
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].id, i).second) {
      throw Error(ErrorKind::InvalidArgument, "KnowledgeBase: duplicate record id '" + records_[i].id + "'");
    }
    const EmbeddingVector e = embedder_->embed(records_[i].text);
    if (e.dim() != dim_) {
      throw Error(ErrorKind::DimensionMismatch, "KnowledgeBase: embedder returned wrong dimension");
    }
    std::copy(e.values().begin(), e.values().end(), matrix_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
    norms_[i] = e.norm();
  }
}

std::size_t KnowledgeBase::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? npos : it->second;
}

std::vector<std::size_t> rank(std::string_view query, const KnowledgeBase& kb, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "retrieve: k must be >= 1");
  if (kb.empty()) throw Error(ErrorKind::EmptyKnowledgeBase, "retrieve: knowledge base is empty");
  const EmbeddingVector q = kb.embedder().embed(query);
  std::vector<double> scores(kb.size());
  kernels::parallel::cosine_scores(q.values(), {kb.matrix(), kb.size(), kb.dim()}, kb.norms(), scores);
  std::vector<std::size_t> order(kb.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t take = std::min(k, kb.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return kb.record(a).id < kb.record(b).id;
                    });
  order.resize(take);
  return order;
}

std::vector<QaRecord> retrieve(std::string_view query, const KnowledgeBase& kb, std::size_t k) {
  std::vector<QaRecord> out;
  for (std::size_t i : rank(query, kb, k)) out.push_back(kb.record(i));
  return out;
}

std::vector<QaRecord> retrieve_ideal(const QaRecord& target, const KnowledgeBase& kb, std::size_t k) {
  const std::size_t at = kb.find(target.id);
  if (at == KnowledgeBase::npos) return retrieve(target.question, kb, k);
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "retrieve: k must be >= 1");
  std::vector<QaRecord> out{kb.record(at)};
  if (k == 1) return out;
  for (std::size_t i : rank(target.question, kb, std::min(k, kb.size()))) {
    if (i == at) continue;
    if (out.size() == k) break;
    out.push_back(kb.record(i));
  }
  return out;
}

std::string build_prompt(std::span<const std::string> context, std::string_view user_input) {
  std::string prompt = "Please answer the question based on the provided context. Context: ";
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i) prompt.push_back('\n');
    prompt += context[i];
  }
  prompt += ". Question: ";
  prompt += user_input;
  prompt += ".";
  return prompt;
}

std::string render_user_input(std::string_view tmpl, const QaRecord& record) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::size_t close = tmpl.find('}', open);
    const std::string_view name =
        close == std::string_view::npos ? std::string_view{} : tmpl.substr(open + 1, close - open - 1);
    if (name == "question") {
      out += record.question;
    } else if (name == "text_prefix") {
      std::string_view prefix = metrics::truncate_tokens(record.text, 10);
      const auto first = prefix.find_first_not_of(" \t\r\n");
      out.append(first == std::string_view::npos ? std::string_view{} : prefix.substr(first));
    } else {
      throw Error(ErrorKind::Config, "user-input template: unknown placeholder in '" + std::string(tmpl) + "'");
    }
    pos = close + 1;
  }
  return out;
}

}  // namespace budgetleak::rag
