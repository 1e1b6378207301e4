#include "gpvls/adapters/replay.hpp"

#include <fstream>

#include <fmt/core.h>

#include "gpvls/data/record.hpp"
#include "gpvls/util/hash.hpp"
#include "json.hpp"

namespace gpvls::adapters {

using nlohmann::ordered_json;

namespace {

ordered_json key_fields(const Query& q) {
    ordered_json j;
    j["system"] = q.system;
    j["prompt"] = q.prompt;
    j["image_ref"] = q.image_ref ? ordered_json(*q.image_ref) : ordered_json(nullptr);
    j["max_tokens"] = q.max_tokens;
    return j;
}

}  // namespace

std::string query_key(const Query& q) { return util::sha256_hex(key_fields(q).dump()); }

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::optional<std::string> ReplayStore::lookup(const Query& q) const {
    const auto path = dir_ / (query_key(q) + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(data::read_file(path));
        return j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw AdapterError(FailureKind::BadResponse, fmt::format("corrupt recording {}: {}", path.string(), e.what()));
    }
}

void ReplayStore::record(const Query& q, const std::string& text) {
    ordered_json j = key_fields(q);
    const std::string key = query_key(q);
    j["key"] = key;
    j["text"] = text;
    std::lock_guard lock(write_mutex_);
    std::filesystem::create_directories(dir_);
    const auto tmp = dir_ / (key + ".json.tmp");
    data::write_file(tmp, j.dump(2) + "\n");
    std::filesystem::rename(tmp, dir_ / (key + ".json"));
}

ReplayAdapter::ReplayAdapter(std::string name, std::filesystem::path dir, bool accepts_images)
    : name_(std::move(name)), accepts_images_(accepts_images), store_(std::move(dir)) {}

Reply ReplayAdapter::query(const Query& q) {
    auto text = store_.lookup(q);
    if (!text) {
        throw ReplayMissError(fmt::format("no recording for query {} in {}", query_key(q), store_.dir().string()));
    }
    return {std::move(*text), 0, std::nullopt};
}

Health ReplayAdapter::probe() {
    if (!std::filesystem::is_directory(store_.dir())) {
        return {false, FailureKind::Load, fmt::format("replay store {} does not exist", store_.dir().string())};
    }
    return {true, std::nullopt, "ok"};
}

RecordingAdapter::RecordingAdapter(ModelAdapter& inner, std::filesystem::path dir)
    : inner_(inner), store_(std::move(dir)) {}

Reply RecordingAdapter::query(const Query& q) {
    Reply r = inner_.query(q);
    store_.record(q, r.text);
    return r;
}

}  // namespace gpvls::adapters
