#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gpvls/data/record.hpp"
#include "json.hpp"

namespace gpvls::data {

// Canonical user turns of the four templated vision datasets.
inline constexpr std::string_view kActionQuestion = "Identify the surgical action in this image";
inline constexpr std::string_view kPhaseQuestion = "What is the surgical phase?";
inline constexpr std::string_view kToolQuestion = "What surgical tools are present in this image?";
inline constexpr std::string_view kTripletQuestion =
    "Identify surgical action triplet(s) in the form of <instrument, verb, target>";

inline constexpr std::string_view kTemplateVersion = "gpvls-templates-v1";

/// The canonical question for a templated vision source, or empty for free-form sources.
std::string_view canonical_question(SourceDataset source);

/// An input item that did not become a record. Excluded items were valid but filtered out
/// (non-surgical, non-English); the rest were malformed.
struct Rejection {
    std::size_t index = 0;  // position in the builder input
    std::size_t line = 0;   // source line when known, else 0
    std::string ref;        // frame or item identifier
    std::string reason;
    bool excluded = false;
};

/// Non-fatal observation about an emitted record (terse SynthSSG answers).
struct Flag {
    std::string record_id;
    std::string reason;
};

struct BuildResult {
    std::vector<VQARecord> records;
    /// Record id -> gold label in the benchmark sidecar schema.
    nlohmann::ordered_json gold = nlohmann::ordered_json::object();
    std::vector<Rejection> rejections;
    std::vector<Flag> flags;

    std::size_t excluded_count() const;
};

enum class EmptyLabelPolicy { Reject, AnswerNone };

struct BuilderOptions {
    /// Closed vocabularies; an empty set disables the check.
    std::set<std::string> tool_vocabulary;
    std::set<std::string> instruments;
    std::set<std::string> verbs;
    std::set<std::string> targets;
    /// Frames with no tools/triplets are rejected unless set to AnswerNone.
    EmptyLabelPolicy empty_labels = EmptyLabelPolicy::Reject;
    /// Used when an annotation has no explicit image_ref.
    std::string image_pattern = "{video_id}/{frame_id}.png";
};

/// Options with the SurgToolLoc tool list and the CholecT50 triplet vocabularies.
BuilderOptions default_builder_options();

const std::vector<std::string>& sar_rarp50_actions();
const std::set<std::string>& surgtoolloc_tools();
const std::set<std::string>& cholect50_instruments();
const std::set<std::string>& cholect50_verbs();
const std::set<std::string>& cholect50_targets();

/// "A", "A and B", "A, B, and C" over lexicographically sorted unique items.
std::string join_with_conjunction(std::vector<std::string> items);

std::string action_answer(std::string_view action);
std::string phase_answer(std::string_view phase);
std::string tool_answer(const std::vector<std::string>& tools);
std::string triplet_answer(const std::vector<TripletLabel>& triplets);

BuildResult build_action_vqa(std::vector<FrameAnnotation> annotations,
                             const BuilderOptions& options = default_builder_options());
BuildResult build_phase_vqa(std::vector<FrameAnnotation> annotations,
                            const BuilderOptions& options = default_builder_options());
BuildResult build_triplet_vqa(std::vector<FrameAnnotation> annotations,
                              const BuilderOptions& options = default_builder_options());
BuildResult build_tool_vqa(std::vector<FrameAnnotation> annotations,
                           const BuilderOptions& options = default_builder_options());

struct SynthSsgItem {
    std::string image_ref;
    std::string question;
    std::string answer;
    Split split = Split::Train;
    std::size_t line = 0;
};

/// Free-form image QA; answers of one or two words are flagged, not rejected.
BuildResult ingest_synthssg(const std::vector<SynthSsgItem>& items);

/// A raw JSON input item with the line it came from (JSONL) or its array index + 1.
struct RawItem {
    std::size_t line = 0;
    nlohmann::json value;
    std::string parse_error;  // non-empty when the line was not valid JSON
};

/// Parses a JSON array or JSONL file. Lines that are not JSON become items carrying a
/// parse_error so that they surface as rejections downstream.
std::vector<RawItem> read_raw_items(const std::filesystem::path& path);

struct SurgeryPredicate {
    std::set<std::string> subjects = {"surgery"};  // compared case-insensitively
    std::vector<std::string> topic_keywords;       // substring match on topic_name, case-insensitive
    bool matches(const nlohmann::json& item) const;
};

/// MedMCQA items matching the predicate become medmcqa_surgery multiple-choice records.
BuildResult filter_medmcqa_surgery(const std::vector<RawItem>& items, const SurgeryPredicate& predicate,
                                   Split split);

/// {image_ref, question, answer} objects; missing fields map to empty strings and are rejected
/// by ingest_synthssg.
std::vector<SynthSsgItem> synthssg_items(const std::vector<RawItem>& items, Split split);

/// Schema mapping for the text-only sources (medqa, medmcqa, flashcards, medinstruct,
/// surgtb_qa). Schema violations are rejected with their line number.
BuildResult ingest_text_qa(SourceDataset source, const std::vector<RawItem>& items, Split split);

/// Records of one split, in their original order.
std::vector<VQARecord> select_split(const std::vector<VQARecord>& records, Split split);
/// Gold entries for the given records, in record order.
nlohmann::ordered_json select_gold(const nlohmann::ordered_json& gold, const std::vector<VQARecord>& records);

/// "{question}\nA. ... B. ..." user turn for a multiple-choice item.
std::string format_mc_question(std::string_view question,
                               const std::vector<std::pair<std::string, std::string>>& options);

}  // namespace gpvls::data
