// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "doctest.h"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "httplib.h"

#include "budgetleak/error.hpp"
#include "budgetleak/knowledge_base.hpp"
#include "budgetleak/remote.hpp"

using namespace budgetleak;
using namespace budgetleak::rag;
using namespace std::chrono_literals;

namespace {

// Local chat-completions server that fails the first `failures` requests
// with `fail_status` and then answers with a fixed completion.
class FakeServer {
 public:
  FakeServer(int failures, int fail_status, std::string retry_after = "")
      : failures_(failures), fail_status_(fail_status), retry_after_(std::move(retry_after)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu_);
        bodies_.push_back(nlohmann::json::parse(req.body));
        auth_ = req.get_header_value("Authorization");
      }
      if (hits_.fetch_add(1) < failures_) {
        res.status = fail_status_;
        if (!retry_after_.empty()) res.set_header("Retry-After", retry_after_);
        res.set_content("{\"error\":\"nope\"}", "application/json");
        return;
      }
      res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"alpha beta gamma delta"}}]})",
                      "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[{"embedding":[3.0, 4.0]}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  HttpEndpoint endpoint(std::string path) const {
    HttpEndpoint e = endpoint_with_path(std::move(path));
    e.base_url = "http://127.0.0.1:" + std::to_string(port_);
    e.timeout = 5s;
    e.retry.base_delay = 1ms;
    e.retry.max_delay = 2000ms;
    e.api_key = "test-key";
    return e;
  }
  int hits() const { return hits_.load(); }
  nlohmann::json last_body() {
    std::lock_guard lock(mu_);
    return bodies_.back();
  }
  std::string auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  int fail_status_;
  std::string retry_after_;
  std::atomic<int> hits_{0};
  std::mutex mu_;
  std::vector<nlohmann::json> bodies_;
  std::string auth_;
};

RemoteGeneratorConfig gen_config(const FakeServer& s) {
  RemoteGeneratorConfig c;
  c.endpoint = s.endpoint("/v1/chat/completions");
  c.model = "m1";
  return c;
}

}  // namespace

TEST_CASE("request body follows the chat-completions shape") {
  FakeServer s(0, 500);
  auto cfg = gen_config(s);
  cfg.top_p = 0.9;
  RemoteGenerator gen(cfg);
  const auto resp = gen.generate({"What?", {"ctx one", "ctx two"}, 3});
  const auto body = s.last_body();
  CHECK(body["model"] == "m1");
  CHECK(body["max_tokens"] == 3);
  CHECK(body["temperature"] == 0.0);
  CHECK(body["top_p"] == 0.9);
  REQUIRE(body["messages"].size() == 1);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == build_prompt(std::vector<std::string>{"ctx one", "ctx two"}, "What?"));
  CHECK(s.auth() == "Bearer test-key");
  // Four tokens returned against a budget of three: clipped and flagged.
  CHECK(resp.text == "alpha beta gamma");
  CHECK(resp.truncated);
  CHECK(gen.fingerprint().find("m1") != std::string::npos);
}

TEST_CASE("retries on 5xx and 429 then succeeds") {
  for (int status : {429, 500, 502, 503}) {
    FakeServer s(2, status);
    RemoteGenerator gen(gen_config(s));
    CHECK(gen.generate({"q", {}, 10}).text == "alpha beta gamma delta");
    CHECK(s.hits() == 3);
  }
}

TEST_CASE("gives up after the retry limit") {
  FakeServer s(100, 503);
  auto cfg = gen_config(s);
  cfg.endpoint.retry.max_retries = 3;
  RemoteGenerator gen(cfg);
  CHECK_THROWS_AS(gen.generate({"q", {}, 10}), ServerError);
  CHECK(s.hits() == 4);
}

TEST_CASE("Retry-After is honoured") {
  FakeServer s(1, 429, "1");
  RemoteGenerator gen(gen_config(s));
  const auto t0 = std::chrono::steady_clock::now();
  gen.generate({"q", {}, 10});
  CHECK(std::chrono::steady_clock::now() - t0 >= 950ms);
  CHECK(s.hits() == 2);
}

TEST_CASE("auth failures are not retried and name the key variable") {
  for (int status : {401, 403}) {
    FakeServer s(100, status);
    RemoteGenerator gen(gen_config(s));
    try {
      gen.generate({"q", {}, 10});
      FAIL("expected AuthError");
    } catch (const AuthError& e) {
      CHECK(std::string(e.what()).find("BUDGETLEAK_API_KEY") != std::string::npos);
      CHECK(std::string(e.what()).find("test-key") == std::string::npos);
    }
    CHECK(s.hits() == 1);
  }
}

TEST_CASE("other client errors are not retried") {
  FakeServer s(100, 400);
  RemoteGenerator gen(gen_config(s));
  CHECK_THROWS_AS(gen.generate({"q", {}, 10}), Error);
  CHECK(s.hits() == 1);
}

TEST_CASE("unreachable endpoint raises a transport error") {
  HttpEndpoint e = endpoint_with_path("/v1/chat/completions");
  e.base_url = "http://127.0.0.1:1";
  e.timeout = 500ms;
  e.retry.max_retries = 1;
  e.retry.base_delay = 1ms;
  RemoteGeneratorConfig cfg;
  cfg.endpoint = e;
  cfg.model = "m";
  RemoteGenerator gen(cfg);
  CHECK_THROWS_AS(gen.generate({"q", {}, 10}), TransportError);
}

TEST_CASE("remote embedder") {
  FakeServer s(0, 500);
  RemoteEmbedderConfig cfg;
  cfg.endpoint = s.endpoint("/v1/embeddings");
  cfg.model = "e";
  cfg.dim = 2;
  RemoteEmbedder emb(cfg);
  const auto v = emb.embed("text");
  CHECK(v[0] == 3.0);
  CHECK(v[1] == 4.0);
  cfg.dim = 3;
  CHECK_THROWS_AS(RemoteEmbedder(cfg).embed("text"), Error);
}
