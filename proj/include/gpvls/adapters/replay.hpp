#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

#include "gpvls/adapters/adapter.hpp"

namespace gpvls::adapters {

/// Content hash of the fields that determine a reply: system, prompt, image_ref, max_tokens.
std::string query_key(const Query& q);

/// Content-addressed directory of recorded replies, one `<key>.json` file per query.
class ReplayStore {
public:
    explicit ReplayStore(std::filesystem::path dir);
    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::optional<std::string> lookup(const Query& q) const;
    void record(const Query& q, const std::string& text);

private:
    std::filesystem::path dir_;
    std::mutex write_mutex_;
};

class ReplayAdapter final : public ModelAdapter {
public:
    ReplayAdapter(std::string name, std::filesystem::path dir, bool accepts_images = true);
    std::string name() const override { return name_; }
    bool accepts_images() const override { return accepts_images_; }
    /// Throws ReplayMissError for unrecorded queries.
    Reply query(const Query& q) override;
    /// Healthy when the store directory exists.
    Health probe() override;

private:
    std::string name_;
    bool accepts_images_;
    ReplayStore store_;
};

/// Forwards to another adapter and records every successful reply.
class RecordingAdapter final : public ModelAdapter {
public:
    RecordingAdapter(ModelAdapter& inner, std::filesystem::path dir);
    std::string name() const override { return inner_.name(); }
    bool accepts_images() const override { return inner_.accepts_images(); }
    Reply query(const Query& q) override;
    Health probe() override { return inner_.probe(); }

private:
    ModelAdapter& inner_;
    ReplayStore store_;
};

}  // namespace gpvls::adapters
