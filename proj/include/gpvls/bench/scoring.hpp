#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>

#include "gpvls/bench/normalize.hpp"
#include "gpvls/data/record.hpp"
#include "json.hpp"

namespace gpvls::bench {

enum class TaskName {
    MedQa,
    MedMcqaSurgery,
    PhaseRecognition,
    TripletRecognition,
    ToolRecognition,
    ActionRecognition,
};

/// Table column order.
inline constexpr std::array<TaskName, 6> kAllTasks = {
    TaskName::MedQa,           TaskName::MedMcqaSurgery,  TaskName::PhaseRecognition,
    TaskName::TripletRecognition, TaskName::ToolRecognition, TaskName::ActionRecognition,
};

std::string_view to_string(TaskName task);      // "medqa", "phase_recognition", ...
std::string_view column_title(TaskName task);   // "MedQA", "Phase Recgn", ...
TaskName parse_task(std::string_view name);     // throws ConfigError
bool is_vision_task(TaskName task);
bool is_set_task(TaskName task);
/// The dataset whose test split serves the task.
data::SourceDataset task_source(TaskName task);

struct McGold {
    std::string answer;
    Options options;
};
using ToolSet = std::set<std::string>;
using TripletSet = std::set<data::TripletLabel>;
/// Option letter, phase/action string, tool set, or triplet set.
using GoldLabel = std::variant<McGold, std::string, ToolSet, TripletSet>;

/// Reads one gold sidecar entry in the shape the builders write. Throws ConfigError when the
/// JSON shape does not fit the task.
GoldLabel gold_from_json(TaskName task, const nlohmann::json& value);

struct SetDetail {
    std::size_t true_positives = 0;
    std::size_t predicted = 0;
    std::size_t gold = 0;
    double precision() const;  // 0 when nothing was predicted and gold is non-empty
    double recall() const;

    friend bool operator==(const SetDetail&, const SetDetail&) = default;
};

struct ScoreOutcome {
    std::string record_id;
    bool correct = false;
    std::string extracted;  // letter, matched label, or the formatted parsed set
    std::optional<SetDetail> detail;
    std::size_t skipped_groups = 0;  // malformed triplet groups in the response
};

/// Pure and deterministic. Throws ConfigError when the gold label type does not fit the task.
ScoreOutcome score_record(TaskName task, std::string_view response, const GoldLabel& gold);

/// Vocabulary used for tool parsing: the SurgToolLoc list plus any name in `gold`.
std::set<std::string> tool_vocabulary(const ToolSet& gold);

}  // namespace gpvls::bench
