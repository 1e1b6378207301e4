#include "gpvls/adapters/adapter.hpp"

#include <thread>

namespace gpvls::adapters {

std::string_view to_string(FailureKind kind) {
    switch (kind) {
        case FailureKind::Timeout: return "timeout";
        case FailureKind::Auth: return "auth";
        case FailureKind::RateLimit: return "rate_limit";
        case FailureKind::Connection: return "connection";
        case FailureKind::Server: return "server";
        case FailureKind::BadResponse: return "bad_response";
        case FailureKind::ReplayMiss: return "replay_miss";
        case FailureKind::Load: return "load";
        case FailureKind::Input: return "input";
    }
    return "unknown";
}

bool AdapterError::retryable() const noexcept {
    switch (kind_) {
        case FailureKind::Timeout:
        case FailureKind::RateLimit:
        case FailureKind::Connection:
        case FailureKind::Server:
            return true;
        default:
            return false;
    }
}

Health ModelAdapter::probe() {
    Query q;
    q.prompt = "Reply with OK.";
    q.max_tokens = 1;
    try {
        query(q);
        return {true, std::nullopt, "ok"};
    } catch (const AdapterError& e) {
        return {false, e.kind(), e.what()};
    }
}

Reply query_with_retry(ModelAdapter& adapter, const Query& q, const RetryPolicy& policy, const Sleeper& sleep) {
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return adapter.query(q);
        } catch (const AdapterError& e) {
            if (!e.retryable() || attempt >= policy.max_attempts) throw;
        }
        if (sleep) sleep(backoff);
        else std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
}

}  // namespace gpvls::adapters
