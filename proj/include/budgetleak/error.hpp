// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace budgetleak {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  ZeroVector,
  EmptyKnowledgeBase,
  Transport,
  Auth,
  RateLimited,
  Server,
  BadResponse,
  CacheMiss,
  Probe,
  Config,
  MissingArtifact,
  FingerprintMismatch,
  InsufficientData,
  Io,
};

const char* to_string(ErrorKind kind);

/// Base error for the toolkit. `retryable()` tells callers whether the same
/// request may succeed if re-issued (transport hiccups, 429, 5xx).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, bool retryable = false)
      : std::runtime_error(what), kind_(kind), retryable_(retryable) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  ErrorKind kind_;
  bool retryable_;
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(ErrorKind::Transport, what, true) {}
};

class AuthError : public Error {
 public:
  explicit AuthError(const std::string& what) : Error(ErrorKind::Auth, what, false) {}
};

class RateLimitError : public Error {
 public:
  explicit RateLimitError(const std::string& what, std::optional<long> retry_after_s = std::nullopt)
      : Error(ErrorKind::RateLimited, what, true), retry_after_s_(retry_after_s) {}
  /// Server-suggested wait from a Retry-After header, in seconds.
  std::optional<long> retry_after_s() const noexcept { return retry_after_s_; }

 private:
  std::optional<long> retry_after_s_;
};

class ServerError : public Error {
 public:
  ServerError(int status, const std::string& what)
      : Error(ErrorKind::Server, what, true), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class CacheMissError : public Error {
 public:
  explicit CacheMissError(const std::string& what) : Error(ErrorKind::CacheMiss, what, false) {}
};

class ProbeError : public Error {
 public:
  ProbeError(std::string sample_id, int budget, const std::string& what)
      : Error(ErrorKind::Probe, what, false), sample_id_(std::move(sample_id)), budget_(budget) {}
  const std::string& sample_id() const noexcept { return sample_id_; }
  int budget() const noexcept { return budget_; }

 private:
  std::string sample_id_;
  int budget_;
};

}  // namespace budgetleak
