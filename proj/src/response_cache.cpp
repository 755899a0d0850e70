// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/response_cache.hpp"

#include <iterator>
#include <sstream>

#include "json.hpp"

#include "budgetleak/error.hpp"
#include "budgetleak/knowledge_base.hpp"
#include "budgetleak/log.hpp"

namespace budgetleak::rag {

void ResponseCache::drop_partial_tail() {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path_, ec);
  if (ec || size == 0) return;
  std::ifstream in(path_, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.back() == '\n') return;
  const auto last = data.rfind('\n');
  const std::size_t start = last == std::string::npos ? 0 : last + 1;
  in.close();
  if (nlohmann::json::accept(std::string_view(data).substr(start))) {
    std::ofstream(path_, std::ios::binary | std::ios::app) << '\n';
  } else {
    std::filesystem::resize_file(path_, start);
  }
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::size_t torn = 0;
  if (std::ifstream in(path_, std::ios::binary); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto obj = nlohmann::json::parse(line);
        ProbeResponse r;
        r.text = obj.at("text").get<std::string>();
        r.budget = obj.at("budget").get<int>();
        r.truncated = obj.at("truncated").get<bool>();
        r.latency_ms = obj.value("latency_ms", std::int64_t{0});
        entries_.insert_or_assign(obj.at("key").get<std::string>(), std::move(r));
      } catch (const nlohmann::json::exception&) {
        ++torn;
      }
    }
  }
  if (torn > 0) log::warn("cache.skipped_lines", {{"path", path_.string()}, {"count", torn}});
  drop_partial_tail();
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorKind::Io, "cannot open response cache " + path_.string());
}

std::optional<ProbeResponse> ResponseCache::lookup(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const std::string& key, const ProbeResponse& response) {
  std::unique_lock lock(mu_);
  if (!entries_.emplace(key, response).second) return;
  if (out_.is_open()) {
    const nlohmann::json line = {{"key", key},
                                 {"budget", response.budget},
                                 {"truncated", response.truncated},
                                 {"latency_ms", response.latency_ms},
                                 {"text", response.text}};
    out_ << line.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorKind::Io, "write to response cache failed: " + path_.string());
  }
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

CachingGenerator::CachingGenerator(std::shared_ptr<Generator> inner, std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_ || !cache_) throw Error(ErrorKind::InvalidArgument, "CachingGenerator: null inner or cache");
}

ProbeResponse CachingGenerator::do_generate(const GenerationRequest& request) {
  const std::string key = cache_key(build_prompt(request.context, request.query), request.budget,
                                    inner_->fingerprint());
  if (auto hit = cache_->lookup(key)) {
    ++hits_;
    return *hit;
  }
  ++backend_calls_;
  ProbeResponse response = inner_->generate(request);
  cache_->store(key, response);
  return response;
}

ReplayGenerator::ReplayGenerator(std::shared_ptr<const ResponseCache> cache, std::string decoding_fingerprint)
    : cache_(std::move(cache)), fingerprint_(std::move(decoding_fingerprint)) {
  if (!cache_) throw Error(ErrorKind::InvalidArgument, "ReplayGenerator: null cache");
}

ProbeResponse ReplayGenerator::do_generate(const GenerationRequest& request) {
  const std::string prompt = build_prompt(request.context, request.query);
  const std::string key = cache_key(prompt, request.budget, fingerprint_);
  if (auto hit = cache_->lookup(key)) return *hit;
  throw CacheMissError("replay: no cached response for budget " + std::to_string(request.budget) +
                       " (key " + key.substr(0, 16) + "...)");
}

}  // namespace budgetleak::rag
