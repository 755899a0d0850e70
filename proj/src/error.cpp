// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/error.hpp"

namespace budgetleak {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    case ErrorKind::ZeroVector: return "zero_vector";
    case ErrorKind::EmptyKnowledgeBase: return "empty_knowledge_base";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Auth: return "auth";
    case ErrorKind::RateLimited: return "rate_limited";
    case ErrorKind::Server: return "server";
    case ErrorKind::BadResponse: return "bad_response";
    case ErrorKind::CacheMiss: return "cache_miss";
    case ErrorKind::Probe: return "probe";
    case ErrorKind::Config: return "config";
    case ErrorKind::MissingArtifact: return "missing_artifact";
    case ErrorKind::FingerprintMismatch: return "fingerprint_mismatch";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace budgetleak
