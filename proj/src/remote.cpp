// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/remote.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "budgetleak/error.hpp"
#include "budgetleak/knowledge_base.hpp"
#include "budgetleak/log.hpp"
#include "budgetleak/rng.hpp"

namespace budgetleak::rag {

namespace {

struct SlotGuard {
  std::counting_semaphore<>& sem;
  explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
};

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int retry, Rng& rng,
                                        std::optional<long> retry_after_s) {
  const double base = static_cast<double>(policy.base_delay.count()) * std::ldexp(1.0, retry);
  double delay = std::min(base, static_cast<double>(policy.max_delay.count()));
  delay *= 0.5 + 0.5 * uniform01(rng);
  if (retry_after_s) delay = std::max(delay, 1000.0 * static_cast<double>(*retry_after_s));
  delay = std::min(delay, static_cast<double>(policy.max_delay.count()));
  return std::chrono::milliseconds(static_cast<long long>(delay));
}

}  // namespace

std::string api_key_from_env() {
  const char* key = std::getenv(kApiKeyEnv);
  return key ? std::string(key) : std::string();
}

JsonHttpClient::JsonHttpClient(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)),
      slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, endpoint_.max_in_flight))),
      attempts_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  if (endpoint_.base_url.empty()) throw Error(ErrorKind::Config, "remote endpoint: base_url is empty");
  if (endpoint_.retry.max_retries < 0) throw Error(ErrorKind::Config, "remote endpoint: max_retries < 0");
}

nlohmann::json JsonHttpClient::post_once(const std::string& body) const {
  SlotGuard slot(*slots_);
  ++*attempts_;
  httplib::Client client(endpoint_.base_url);
  const auto timeout = endpoint_.timeout;
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                static_cast<time_t>((timeout.count() % 1000) * 1000));
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
  auto res = client.Post(endpoint_.path, headers, body, "application/json");
  if (!res) {
    throw TransportError("POST " + endpoint_.base_url + endpoint_.path + ": " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw AuthError("remote endpoint rejected credentials (HTTP " + std::to_string(status) +
                    "); set " + kApiKeyEnv + " to a valid API key");
  }
  if (status == 429) {
    std::optional<long> retry_after;
    if (res->has_header("Retry-After")) {
      char* end = nullptr;
      const std::string header = res->get_header_value("Retry-After");
      const long seconds = std::strtol(header.c_str(), &end, 10);
      if (end != header.c_str() && seconds >= 0) retry_after = seconds;
    }
    throw RateLimitError("remote endpoint rate limited the request (HTTP 429)", retry_after);
  }
  if (status >= 500) throw ServerError(status, "remote endpoint server error (HTTP " + std::to_string(status) + ")");
  if (status < 200 || status >= 300) {
    throw Error(ErrorKind::BadResponse, "remote endpoint returned HTTP " + std::to_string(status) + ": " +
                                            res->body.substr(0, 200));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::BadResponse, std::string("remote endpoint returned invalid JSON: ") + e.what());
  }
}

nlohmann::json JsonHttpClient::post(const nlohmann::json& body) const {
  const std::string payload = body.dump();
  Rng rng(derive_seed(endpoint_.retry.jitter_seed, payload));
  for (int retry = 0;; ++retry) {
    try {
      return post_once(payload);
    } catch (const Error& e) {
      if (!e.retryable() || retry >= endpoint_.retry.max_retries) throw;
      std::optional<long> retry_after;
      if (const auto* limited = dynamic_cast<const RateLimitError*>(&e)) retry_after = limited->retry_after_s();
      const auto delay = backoff_delay(endpoint_.retry, retry, rng, retry_after);
      log::warn("remote.retry", {{"error", to_string(e.kind())},
                                 {"attempt", retry + 1},
                                 {"delay_ms", delay.count()},
                                 {"detail", e.what()}});
      std::this_thread::sleep_for(delay);
    }
  }
}

RemoteGenerator::RemoteGenerator(RemoteGeneratorConfig cfg) : cfg_(std::move(cfg)), client_(cfg_.endpoint) {
  if (cfg_.model.empty()) throw Error(ErrorKind::Config, "remote generator: model is empty");
}

std::string RemoteGenerator::fingerprint() const {
  nlohmann::json fp = {{"backend", "remote"},
                       {"base_url", cfg_.endpoint.base_url},
                       {"path", cfg_.endpoint.path},
                       {"model", cfg_.model},
                       {"temperature", cfg_.temperature}};
  if (cfg_.top_p) fp["top_p"] = *cfg_.top_p;
  return fp.dump();
}

nlohmann::json RemoteGenerator::request_body(const GenerationRequest& request) const {
  nlohmann::json body = {
      {"model", cfg_.model},
      {"messages", nlohmann::json::array({{{"role", "user"},
                                           {"content", build_prompt(request.context, request.query)}}})},
      {"max_tokens", request.budget},
      {"temperature", cfg_.temperature}};
  if (cfg_.top_p) body["top_p"] = *cfg_.top_p;
  return body;
}

ProbeResponse RemoteGenerator::do_generate(const GenerationRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  const nlohmann::json reply = client_.post(request_body(request));
  ProbeResponse response;
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    response.text = content.is_null() ? std::string() : content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadResponse, std::string("chat completion without choices[0].message.content: ") + e.what());
  }
  response.budget = request.budget;
  response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return response;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig cfg) : cfg_(std::move(cfg)), client_(cfg_.endpoint) {
  if (cfg_.model.empty()) throw Error(ErrorKind::Config, "remote embedder: model is empty");
  if (cfg_.dim == 0) throw Error(ErrorKind::Config, "remote embedder: dim must be set");
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  const nlohmann::json reply = client_.post({{"model", cfg_.model}, {"input", text}});
  std::vector<double> values;
  try {
    values = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadResponse, std::string("embedding response without data[0].embedding: ") + e.what());
  }
  if (values.size() != cfg_.dim) {
    throw Error(ErrorKind::DimensionMismatch, "remote embedder: expected dim " + std::to_string(cfg_.dim) +
                                                  ", got " + std::to_string(values.size()));
  }
  return EmbeddingVector(std::move(values));
}

std::size_t RemoteEmbedder::dim() const { return cfg_.dim; }

std::string RemoteEmbedder::id() const {
  return "remote:" + cfg_.endpoint.base_url + cfg_.endpoint.path + ":" + cfg_.model;
}

}  // namespace budgetleak::rag
