#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gpvls/data/record.hpp"

namespace gpvls::data {

struct DatasetManifest {
    SourceDataset source_dataset = SourceDataset::SarVqa;
    Split split = Split::Train;
    std::size_t record_count = 0;
    std::string template_version;
    std::string content_hash;  // sha256 of the JSONL bytes
    std::size_t rejected_count = 0;
    std::size_t excluded_count = 0;
    /// Documented upstream count for this split, when one is known.
    std::optional<std::size_t> reference_count;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

DatasetManifest make_manifest(SourceDataset source, Split split, const std::vector<VQARecord>& records);

std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest load_manifest(const std::filesystem::path& path);

enum class FindingKind { CountMismatch, DuplicateId, TemplateDrift, HashMismatch, InvalidRecord, LabelMismatch };

std::string_view to_string(FindingKind kind);

struct Finding {
    FindingKind kind;
    std::string record_id;  // empty for manifest-level findings
    std::string message;
};

/// An empty report means the records agree with the manifest.
std::vector<Finding> validate_manifest(const std::vector<VQARecord>& records, const DatasetManifest& expected);

}  // namespace gpvls::data
