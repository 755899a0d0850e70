// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include "json.hpp"
#include <string_view>

namespace budgetleak::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

/// Threshold defaults to Info, or to BUDGETLEAK_LOG (debug|info|warn|error|off).
Level threshold();
void set_threshold(Level level);

/// Writes one JSON object per line to stderr: {"level","event",...fields}.
void write(Level level, std::string_view event, nlohmann::json fields = nlohmann::json::object());

inline void debug(std::string_view e, nlohmann::json f = nlohmann::json::object()) { write(Level::Debug, e, std::move(f)); }
inline void info(std::string_view e, nlohmann::json f = nlohmann::json::object()) { write(Level::Info, e, std::move(f)); }
inline void warn(std::string_view e, nlohmann::json f = nlohmann::json::object()) { write(Level::Warn, e, std::move(f)); }
inline void error(std::string_view e, nlohmann::json f = nlohmann::json::object()) { write(Level::Error, e, std::move(f)); }

}  // namespace budgetleak::log
