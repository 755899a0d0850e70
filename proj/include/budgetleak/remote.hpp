// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "json.hpp"

#include "budgetleak/embedding.hpp"
#include "budgetleak/generator.hpp"

namespace budgetleak::rag {

inline constexpr const char* kApiKeyEnv = "BUDGETLEAK_API_KEY";

struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30'000};
  std::uint64_t jitter_seed = 0;
};

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path;
  std::string api_key;   // sent as a bearer token when non-empty
  std::chrono::milliseconds timeout{60'000};
  RetryPolicy retry;
  int max_in_flight = 4;
};

inline HttpEndpoint endpoint_with_path(std::string path) {
  HttpEndpoint e;
  e.path = std::move(path);
  return e;
}

/// Reads the bearer token from BUDGETLEAK_API_KEY (empty when unset).
std::string api_key_from_env();

/// POSTs JSON with retries: exponential backoff with jitter on transport
/// errors, 429 and 5xx. 401/403 raise AuthError; other non-2xx raise a
/// BadResponse error; neither is retried. Safe for concurrent use; at most
/// `max_in_flight` requests run at once.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(HttpEndpoint endpoint);
  nlohmann::json post(const nlohmann::json& body) const;
  const HttpEndpoint& endpoint() const noexcept { return endpoint_; }
  std::uint64_t attempts() const noexcept { return attempts_->load(); }

 private:
  nlohmann::json post_once(const std::string& body) const;

  HttpEndpoint endpoint_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  std::unique_ptr<std::atomic<std::uint64_t>> attempts_;
};

struct RemoteGeneratorConfig {
  HttpEndpoint endpoint = endpoint_with_path("/v1/chat/completions");
  std::string model;
  double temperature = 0.0;
  std::optional<double> top_p;
};

/// Chat-completions backend: {model, messages:[{role:"user", content: prompt}],
/// max_tokens: budget, temperature[, top_p]}. Reads choices[0].message.content.
class RemoteGenerator final : public Generator {
 public:
  explicit RemoteGenerator(RemoteGeneratorConfig cfg);
  std::string fingerprint() const override;
  nlohmann::json request_body(const GenerationRequest& request) const;

 protected:
  ProbeResponse do_generate(const GenerationRequest& request) override;

 private:
  RemoteGeneratorConfig cfg_;
  JsonHttpClient client_;
};

struct RemoteEmbedderConfig {
  HttpEndpoint endpoint = endpoint_with_path("/v1/embeddings");
  std::string model;
  std::size_t dim = 0;  // expected dimension, required
};

/// Embeddings backend: {model, input} -> data[0].embedding.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig cfg);
  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dim() const override;
  std::string id() const override;

 private:
  RemoteEmbedderConfig cfg_;
  JsonHttpClient client_;
};

}  // namespace budgetleak::rag
