#pragma once

#include <filesystem>
#include <string>

#include "gpvls/adapters/adapter.hpp"

namespace gpvls::adapters {

/// An OpenAI-style chat-completions endpoint.
struct RemoteConfig {
    std::string name;
    std::string base_url;  // "https://api.example.com" or "http://127.0.0.1:8080"
    std::string path = "/v1/chat/completions";
    std::string model;
    /// Environment variable holding the bearer token; empty sends no Authorization header.
    std::string api_key_env;
    int timeout_ms = 30000;
    std::size_t max_image_bytes = 4 * 1024 * 1024;
    std::filesystem::path image_root;
    bool accepts_images = true;
};

class RemoteAdapter final : public ModelAdapter {
public:
    /// Reads the credential from the environment once, here.
    explicit RemoteAdapter(RemoteConfig config);
    std::string name() const override { return config_.name; }
    bool accepts_images() const override { return config_.accepts_images; }
    /// One HTTP attempt; retries belong to the caller (see query_with_retry).
    Reply query(const Query& q) override;

    /// Request body for a query; exposed for tests.
    std::string request_body(const Query& q) const;

private:
    std::string scrub(std::string text) const;

    RemoteConfig config_;
    std::string secret_;
};

}  // namespace gpvls::adapters
