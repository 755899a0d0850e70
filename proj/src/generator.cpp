// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/generator.hpp"

#include "json.hpp"

#include "budgetleak/error.hpp"
#include "budgetleak/hashing.hpp"
#include "budgetleak/text_metrics.hpp"

namespace budgetleak::rag {

ProbeResponse enforce_budget(ProbeResponse response, int budget) {
  const auto cap = static_cast<std::size_t>(budget);
  const std::string_view kept = metrics::truncate_tokens(response.text, cap);
  if (kept.size() != response.text.size()) response.text = std::string(kept);
  response.budget = budget;
  response.truncated = metrics::count_tokens(response.text) == cap;
  return response;
}

ProbeResponse Generator::generate(const GenerationRequest& request) {
  if (request.budget < 1) {
    throw Error(ErrorKind::InvalidArgument, "generate: budget must be >= 1, got " + std::to_string(request.budget));
  }
  return enforce_budget(do_generate(request), request.budget);
}

std::string cache_key(std::string_view prompt, int budget, std::string_view decoding_fingerprint) {
  const nlohmann::json key = {
      {"budget", budget}, {"decoding", decoding_fingerprint}, {"prompt", prompt}};
  return sha256_hex(key.dump());
}

}  // namespace budgetleak::rag
