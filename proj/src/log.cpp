// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace budgetleak::log {

namespace {

Level from_env() {
  const char* env = std::getenv("BUDGETLEAK_LOG");
  if (!env) return Level::Info;
  const std::string v(env);
  if (v == "debug") return Level::Debug;
  if (v == "warn") return Level::Warn;
  if (v == "error") return Level::Error;
  if (v == "off") return Level::Off;
  return Level::Info;
}

std::atomic<int>& level_slot() {
  static std::atomic<int> slot{static_cast<int>(from_env())};
  return slot;
}

const char* name(Level level) {
  switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    case Level::Off: return "off";
  }
  return "?";
}

}  // namespace

Level threshold() { return static_cast<Level>(level_slot().load()); }
void set_threshold(Level level) { level_slot().store(static_cast<int>(level)); }

void write(Level level, std::string_view event, nlohmann::json fields) {
  if (level < threshold()) return;
  nlohmann::json line = nlohmann::json::object();
  line["level"] = name(level);
  line["event"] = event;
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) line[k] = v;
  }
  static std::mutex mu;
  const std::string text = line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  std::lock_guard lock(mu);
  std::cerr << text << '\n';
}

}  // namespace budgetleak::log
