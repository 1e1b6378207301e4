#include "gpvls/adapters/remote.hpp"

#include <chrono>
#include <cstdlib>

#include <fmt/core.h>

#include "gpvls/data/record.hpp"
#include "gpvls/util/hash.hpp"
#include "httplib.h"
#include "json.hpp"

namespace gpvls::adapters {

using nlohmann::ordered_json;

namespace {

std::string mime_type(const std::filesystem::path& p) {
    const std::string ext = p.extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".ppm") return "image/x-portable-pixmap";
    if (ext == ".pgm") return "image/x-portable-graymap";
    return "application/octet-stream";
}

}  // namespace

RemoteAdapter::RemoteAdapter(RemoteConfig config) : config_(std::move(config)) {
    if (!config_.api_key_env.empty()) {
        if (const char* v = std::getenv(config_.api_key_env.c_str())) secret_ = v;
    }
}

std::string RemoteAdapter::scrub(std::string text) const {
    if (secret_.empty()) return text;
    for (std::size_t pos; (pos = text.find(secret_)) != std::string::npos;) text.replace(pos, secret_.size(), "[redacted]");
    return text;
}

std::string RemoteAdapter::request_body(const Query& q) const {
    ordered_json messages = ordered_json::array();
    if (!q.system.empty()) messages.push_back({{"role", "system"}, {"content", q.system}});
    ordered_json content = ordered_json::array();
    content.push_back({{"type", "text"}, {"text", q.prompt}});
    if (q.image_ref) {
        if (!config_.accepts_images) throw AdapterError(FailureKind::Input, "adapter does not accept images");
        const auto path = config_.image_root / *q.image_ref;
        if (!std::filesystem::exists(path)) {
            throw AdapterError(FailureKind::Input, fmt::format("image {} not found", *q.image_ref));
        }
        if (std::filesystem::file_size(path) > config_.max_image_bytes) {
            throw AdapterError(FailureKind::Input, fmt::format("image {} exceeds {} bytes", *q.image_ref,
                                                               config_.max_image_bytes));
        }
        const std::string url = "data:" + mime_type(path) + ";base64," + util::base64_encode(data::read_file(path));
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
    messages.push_back({{"role", "user"}, {"content", content}});
    ordered_json body;
    body["model"] = config_.model;
    body["messages"] = messages;
    body["max_tokens"] = q.max_tokens;
    body["temperature"] = q.temperature;
    return body.dump();
}

Reply RemoteAdapter::query(const Query& q) {
    const std::string body = request_body(q);
    const auto start = std::chrono::steady_clock::now();
    httplib::Client client(config_.base_url);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!secret_.empty()) headers.emplace("Authorization", "Bearer " + secret_);
    auto res = client.Post(config_.path, headers, body, "application/json");
    if (!res) {
        const auto err = res.error();
        const std::string what = scrub(fmt::format("{}: {}", config_.base_url, httplib::to_string(err)));
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) throw TimeoutError(what);
        throw ConnectionError(what);
    }
    const int status = res->status;
    const std::string excerpt = scrub(res->body.substr(0, 200));
    if (status == 401 || status == 403) throw AuthError(fmt::format("HTTP {}: {}", status, excerpt));
    if (status == 429) throw RateLimitError(fmt::format("HTTP 429: {}", excerpt));
    if (status == 408 || status == 504) throw TimeoutError(fmt::format("HTTP {}: {}", status, excerpt));
    if (status >= 500) throw ServerError(fmt::format("HTTP {}: {}", status, excerpt));
    if (status != 200) throw AdapterError(FailureKind::BadResponse, fmt::format("HTTP {}: {}", status, excerpt));
    Reply reply;
    try {
        const auto j = nlohmann::json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        reply.text = content.is_null() ? std::string() : content.get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            reply.token_usage = TokenUsage{j["usage"].value("prompt_tokens", 0LL), j["usage"].value("completion_tokens", 0LL)};
        }
    } catch (const nlohmann::json::exception& e) {
        throw AdapterError(FailureKind::BadResponse, scrub(fmt::format("unexpected response body: {}", e.what())));
    }
    reply.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    return reply;
}

}  // namespace gpvls::adapters
