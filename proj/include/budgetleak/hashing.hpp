// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <string>
#include <string_view>

namespace budgetleak {

/// Lowercase hex SHA-256 digest of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace budgetleak
