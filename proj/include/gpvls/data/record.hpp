#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gpvls::data {

enum class SourceDataset {
    SarVqa,
    Cholect50Phase,
    Cholect50Triplet,
    SurgToolLoc,
    SynthSsg,
    MedQa,
    MedMcqa,
    MedMcqaSurgery,
    Flashcards,
    MedInstruct,
    SurgTbQa,
};

std::string_view to_string(SourceDataset source);
/// Accepts the snake_case wire names ("sar_vqa", "cholect50_phase", ...).
SourceDataset parse_source(std::string_view name);
const std::vector<SourceDataset>& all_sources();
/// Vision datasets carry an image_ref on every record.
bool is_vision(SourceDataset source);

enum class Split { Train, Test };
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

enum class Role { User, Assistant };
std::string_view to_string(Role role);

struct Turn {
    Role role;
    std::string text;
    friend bool operator==(const Turn&, const Turn&) = default;
};

/// One conversation grounded on an optional image; the unit of every dataset.
struct VQARecord {
    std::string id;
    std::optional<std::string> image_ref;
    SourceDataset source_dataset;
    Split split;
    std::vector<Turn> turns;

    /// Turns alternate user/assistant starting with user, texts are non-empty, and image_ref is
    /// present exactly for vision sources. Throws ValidationError.
    void validate() const;
    const std::string& question() const { return turns.front().text; }
    const std::string& answer() const { return turns.at(1).text; }

    friend bool operator==(const VQARecord&, const VQARecord&) = default;
};

VQARecord make_single_turn(std::string id, std::optional<std::string> image_ref, SourceDataset source,
                           Split split, std::string question, std::string answer);

/// Compact JSON, keys in the order id, image_ref, source_dataset, split, turns. No newline.
std::string serialize_record(const VQARecord& record);
/// Strict parse: unknown or missing keys and invariant violations raise ValidationError.
VQARecord parse_record(std::string_view line);

std::string serialize_jsonl(const std::vector<VQARecord>& records);
std::vector<VQARecord> parse_jsonl(std::string_view text);
std::vector<VQARecord> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<VQARecord>& records);

struct TripletLabel {
    std::string instrument;
    std::string verb;
    std::string target;

    friend auto operator<=>(const TripletLabel&, const TripletLabel&) = default;
};

std::string format_triplet(const TripletLabel& t);  // "<instrument, verb, target>"

struct FrameAnnotation {
    std::string frame_id;
    std::string video_id;
    Split split = Split::Train;
    std::optional<std::string> image_ref;
    std::optional<std::string> phase;
    std::optional<std::string> action;
    std::optional<std::vector<TripletLabel>> triplets;
    std::optional<std::vector<std::string>> tools;
    std::size_t source_line = 0;
};

/// Orders frames by video id then frame id, comparing all-digit ids numerically.
bool frame_order(const FrameAnnotation& a, const FrameAnnotation& b);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gpvls::data
