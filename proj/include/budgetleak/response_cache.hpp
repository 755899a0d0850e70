// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "budgetleak/generator.hpp"

namespace budgetleak::rag {

/// Append-only JSONL response cache. Each line:
///   {"key": sha256, "budget": int, "truncated": bool, "latency_ms": int, "text": string}
/// where key = cache_key(prompt, budget, decoding fingerprint). A torn final
/// line (from an interrupted run) is ignored on load. Reads may run
/// concurrently; appends are serialised and flushed line by line.
class ResponseCache {
 public:
  /// In-memory cache (nothing persisted).
  ResponseCache() = default;
  /// Loads `path` if it exists and appends new entries to it.
  explicit ResponseCache(std::filesystem::path path);

  std::optional<ProbeResponse> lookup(const std::string& key) const;
  void store(const std::string& key, const ProbeResponse& response);
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  // Truncates an unterminated final line so appends start on a fresh line.
  void drop_partial_tail();

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, ProbeResponse> entries_;
  std::ofstream out_;
};

/// Serves responses from the cache and forwards misses to `inner`, storing
/// the result. `backend_calls()` counts forwarded requests.
class CachingGenerator final : public Generator {
 public:
  CachingGenerator(std::shared_ptr<Generator> inner, std::shared_ptr<ResponseCache> cache);

  std::string fingerprint() const override { return inner_->fingerprint(); }
  std::uint64_t backend_calls() const noexcept { return backend_calls_.load(); }
  std::uint64_t hits() const noexcept { return hits_.load(); }

 protected:
  ProbeResponse do_generate(const GenerationRequest& request) override;

 private:
  std::shared_ptr<Generator> inner_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> hits_{0};
};

/// Cache-only backend; a miss raises CacheMissError. `decoding_fingerprint`
/// must be the fingerprint of the backend that filled the cache.
class ReplayGenerator final : public Generator {
 public:
  ReplayGenerator(std::shared_ptr<const ResponseCache> cache, std::string decoding_fingerprint);

  std::string fingerprint() const override { return fingerprint_; }

 protected:
  ProbeResponse do_generate(const GenerationRequest& request) override;

 private:
  std::shared_ptr<const ResponseCache> cache_;
  std::string fingerprint_;
};

}  // namespace budgetleak::rag
