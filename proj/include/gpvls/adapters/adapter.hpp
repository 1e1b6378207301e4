#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "gpvls/errors.hpp"

namespace gpvls::adapters {

struct Query {
    std::string system;
    std::string prompt;
    /// Relative to the adapter's image root, so recordings do not depend on where data lives.
    std::optional<std::string> image_ref;
    int max_tokens = 256;
    double temperature = 0.0;
};

struct TokenUsage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
};

struct Reply {
    std::string text;
    long long latency_ms = 0;
    std::optional<TokenUsage> token_usage;
};

enum class FailureKind { Timeout, Auth, RateLimit, Connection, Server, BadResponse, ReplayMiss, Load, Input };

std::string_view to_string(FailureKind kind);

class AdapterError : public Error {
public:
    AdapterError(FailureKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FailureKind kind() const noexcept { return kind_; }
    /// Transient failures worth another attempt.
    bool retryable() const noexcept;

private:
    FailureKind kind_;
};

class TimeoutError : public AdapterError {
public:
    explicit TimeoutError(const std::string& what) : AdapterError(FailureKind::Timeout, what) {}
};
class AuthError : public AdapterError {
public:
    explicit AuthError(const std::string& what) : AdapterError(FailureKind::Auth, what) {}
};
class RateLimitError : public AdapterError {
public:
    explicit RateLimitError(const std::string& what) : AdapterError(FailureKind::RateLimit, what) {}
};
class ConnectionError : public AdapterError {
public:
    explicit ConnectionError(const std::string& what) : AdapterError(FailureKind::Connection, what) {}
};
class ServerError : public AdapterError {
public:
    explicit ServerError(const std::string& what) : AdapterError(FailureKind::Server, what) {}
};
/// Replay mode was asked for a query that was never recorded.
class ReplayMissError : public AdapterError {
public:
    explicit ReplayMissError(const std::string& what) : AdapterError(FailureKind::ReplayMiss, what) {}
};

struct Health {
    bool ok = false;
    std::optional<FailureKind> failure;
    std::string detail;
};

class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;
    virtual std::string name() const = 0;
    virtual bool accepts_images() const = 0;
    /// Safe to call concurrently.
    virtual Reply query(const Query& q) = 0;
    /// Default: a one-token text query; adapter errors become an unhealthy status.
    virtual Health probe();
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Retries retryable AdapterErrors with exponential backoff; the last error is rethrown.
Reply query_with_retry(ModelAdapter& adapter, const Query& q, const RetryPolicy& policy,
                       const Sleeper& sleep = {});

}  // namespace gpvls::adapters
