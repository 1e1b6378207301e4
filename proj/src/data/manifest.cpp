#include "gpvls/data/manifest.hpp"

#include <set>

#include <fmt/core.h>

#include "gpvls/data/builders.hpp"
#include "gpvls/errors.hpp"
#include "gpvls/util/hash.hpp"
#include "json.hpp"

namespace gpvls::data {

using nlohmann::ordered_json;

DatasetManifest make_manifest(SourceDataset source, Split split, const std::vector<VQARecord>& records) {
    DatasetManifest m;
    m.source_dataset = source;
    m.split = split;
    m.record_count = records.size();
    m.template_version = std::string(kTemplateVersion);
    m.content_hash = util::sha256_hex(serialize_jsonl(records));
    return m;
}

std::string serialize_manifest(const DatasetManifest& m) {
    ordered_json j;
    j["source_dataset"] = to_string(m.source_dataset);
    j["split"] = to_string(m.split);
    j["record_count"] = m.record_count;
    j["template_version"] = m.template_version;
    j["content_hash"] = m.content_hash;
    j["rejected_count"] = m.rejected_count;
    j["excluded_count"] = m.excluded_count;
    j["reference_count"] = m.reference_count ? ordered_json(*m.reference_count) : ordered_json(nullptr);
    return j.dump(2) + "\n";
}

DatasetManifest parse_manifest(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        DatasetManifest m;
        m.source_dataset = parse_source(j.at("source_dataset").get<std::string>());
        m.split = parse_split(j.at("split").get<std::string>());
        m.record_count = j.at("record_count").get<std::size_t>();
        m.template_version = j.at("template_version").get<std::string>();
        m.content_hash = j.at("content_hash").get<std::string>();
        m.rejected_count = j.value("rejected_count", std::size_t{0});
        m.excluded_count = j.value("excluded_count", std::size_t{0});
        if (j.contains("reference_count") && !j["reference_count"].is_null()) {
            m.reference_count = j["reference_count"].get<std::size_t>();
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("invalid manifest: {}", e.what()));
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

std::string_view to_string(FindingKind kind) {
    switch (kind) {
        case FindingKind::CountMismatch: return "count_mismatch";
        case FindingKind::DuplicateId: return "duplicate_id";
        case FindingKind::TemplateDrift: return "template_drift";
        case FindingKind::HashMismatch: return "hash_mismatch";
        case FindingKind::InvalidRecord: return "invalid_record";
        case FindingKind::LabelMismatch: return "label_mismatch";
    }
    return "unknown";
}

std::vector<Finding> validate_manifest(const std::vector<VQARecord>& records, const DatasetManifest& expected) {
    std::vector<Finding> out;
    if (records.size() != expected.record_count) {
        out.push_back({FindingKind::CountMismatch, "",
                       fmt::format("manifest lists {} records, found {}", expected.record_count, records.size())});
    }
    if (expected.reference_count && *expected.reference_count != records.size()) {
        out.push_back({FindingKind::CountMismatch, "",
                       fmt::format("reference count is {}, found {}", *expected.reference_count, records.size())});
    }
    if (expected.template_version != kTemplateVersion) {
        out.push_back({FindingKind::TemplateDrift, "",
                       fmt::format("template version '{}' differs from '{}'", expected.template_version,
                                   kTemplateVersion)});
    }
    const std::string_view canonical = canonical_question(expected.source_dataset);
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) {
            out.push_back({FindingKind::DuplicateId, r.id, fmt::format("id '{}' appears more than once", r.id)});
        }
        try {
            r.validate();
        } catch (const ValidationError& e) {
            out.push_back({FindingKind::InvalidRecord, r.id, e.what()});
            continue;
        }
        if (r.source_dataset != expected.source_dataset || r.split != expected.split) {
            out.push_back({FindingKind::LabelMismatch, r.id,
                           fmt::format("record is {}/{}, manifest is {}/{}", to_string(r.source_dataset),
                                       to_string(r.split), to_string(expected.source_dataset),
                                       to_string(expected.split))});
        }
        if (!canonical.empty()) {
            for (const auto& t : r.turns) {
                if (t.role == Role::User && t.text != canonical) {
                    out.push_back({FindingKind::TemplateDrift, r.id,
                                   fmt::format("user turn '{}' is not the canonical template", t.text)});
                }
            }
        }
    }
    const std::string hash = util::sha256_hex(serialize_jsonl(records));
    if (hash != expected.content_hash) {
        out.push_back({FindingKind::HashMismatch, "",
                       fmt::format("content hash {} does not match manifest {}", hash, expected.content_hash)});
    }
    return out;
}

}  // namespace gpvls::data
