// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace budgetleak::rag {

struct GenerationRequest {
  std::string query;                 // user input
  std::vector<std::string> context;  // retrieved texts, in retrieval order
  int budget = 1;                    // maximum tokens to generate
};

struct ProbeResponse {
  std::string text;
  int budget = 0;
  bool truncated = false;
  std::int64_t latency_ms = 0;

  friend bool operator==(const ProbeResponse&, const ProbeResponse&) = default;
};

/// A text generator behind a hard token cap. `generate` validates the request,
/// delegates to the backend, clips the text to `budget` tokens with the
/// toolkit tokenizer and sets `truncated` when the cap binds.
class Generator {
 public:
  virtual ~Generator() = default;

  ProbeResponse generate(const GenerationRequest& request);

  /// Canonical JSON describing everything besides the prompt and budget that
  /// determines a response (model, decoding parameters, synthetic config).
  /// Part of the response-cache key.
  virtual std::string fingerprint() const = 0;

 protected:
  /// Backend text for the request. May exceed the budget; `generate` clips.
  virtual ProbeResponse do_generate(const GenerationRequest& request) = 0;
};

/// Applies the token cap and the truncated flag to a raw backend response.
ProbeResponse enforce_budget(ProbeResponse response, int budget);

/// Post-generation string transform (e.g. a paraphrasing defense).
using ResponseTransform = std::function<std::string(std::string_view)>;

std::string cache_key(std::string_view prompt, int budget, std::string_view decoding_fingerprint);

}  // namespace budgetleak::rag
