#include "gpvls/bench/scoring.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "gpvls/data/builders.hpp"
#include "gpvls/errors.hpp"

namespace gpvls::bench {

std::string_view to_string(TaskName task) {
    switch (task) {
        case TaskName::MedQa: return "medqa";
        case TaskName::MedMcqaSurgery: return "medmcqa_surgery";
        case TaskName::PhaseRecognition: return "phase_recognition";
        case TaskName::TripletRecognition: return "triplet_recognition";
        case TaskName::ToolRecognition: return "tool_recognition";
        case TaskName::ActionRecognition: return "action_recognition";
    }
    return "unknown";
}

std::string_view column_title(TaskName task) {
    switch (task) {
        case TaskName::MedQa: return "MedQA";
        case TaskName::MedMcqaSurgery: return "MedMCQA-Surgery";
        case TaskName::PhaseRecognition: return "Phase Recgn";
        case TaskName::TripletRecognition: return "Triplet Recgn";
        case TaskName::ToolRecognition: return "Tool Recgn";
        case TaskName::ActionRecognition: return "Action Recgn";
    }
    return "unknown";
}

TaskName parse_task(std::string_view name) {
    for (TaskName t : kAllTasks) {
        if (to_string(t) == name) return t;
    }
    throw ConfigError(fmt::format("unknown task '{}'", name));
}

bool is_vision_task(TaskName task) { return task != TaskName::MedQa && task != TaskName::MedMcqaSurgery; }

bool is_set_task(TaskName task) {
    return task == TaskName::ToolRecognition || task == TaskName::TripletRecognition;
}

data::SourceDataset task_source(TaskName task) {
    switch (task) {
        case TaskName::MedQa: return data::SourceDataset::MedQa;
        case TaskName::MedMcqaSurgery: return data::SourceDataset::MedMcqaSurgery;
        case TaskName::PhaseRecognition: return data::SourceDataset::Cholect50Phase;
        case TaskName::TripletRecognition: return data::SourceDataset::Cholect50Triplet;
        case TaskName::ToolRecognition: return data::SourceDataset::SurgToolLoc;
        case TaskName::ActionRecognition: return data::SourceDataset::SarVqa;
    }
    throw ConfigError("unknown task");
}

GoldLabel gold_from_json(TaskName task, const nlohmann::json& v) {
    auto fail = [&](std::string_view expected) {
        return ConfigError(fmt::format("gold label {} does not fit task {} (expected {})", v.dump(), to_string(task),
                                       expected));
    };
    try {
        switch (task) {
            case TaskName::MedQa:
            case TaskName::MedMcqaSurgery: {
                if (!v.is_object()) throw fail("{answer, options}");
                McGold g;
                g.answer = v.at("answer").get<std::string>();
                for (const auto& o : v.at("options")) g.options.emplace_back(o.at(0).get<std::string>(), o.at(1).get<std::string>());
                return g;
            }
            case TaskName::PhaseRecognition:
            case TaskName::ActionRecognition:
                if (!v.is_string()) throw fail("a string");
                return v.get<std::string>();
            case TaskName::ToolRecognition: {
                if (!v.is_array()) throw fail("an array of tool names");
                ToolSet s;
                for (const auto& t : v) s.insert(t.get<std::string>());
                return s;
            }
            case TaskName::TripletRecognition: {
                if (!v.is_array()) throw fail("an array of [instrument, verb, target]");
                TripletSet s;
                for (const auto& t : v) {
                    if (!t.is_array() || t.size() != 3) throw fail("an array of [instrument, verb, target]");
                    s.insert({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
                }
                return s;
            }
        }
    } catch (const nlohmann::json::exception&) {
        throw fail("a well-formed label");
    }
    throw fail("a known task");
}

double SetDetail::precision() const {
    if (predicted == 0) return gold == 0 ? 1.0 : 0.0;
    return static_cast<double>(true_positives) / static_cast<double>(predicted);
}

double SetDetail::recall() const {
    if (gold == 0) return predicted == 0 ? 1.0 : 0.0;
    return static_cast<double>(true_positives) / static_cast<double>(gold);
}

std::set<std::string> tool_vocabulary(const ToolSet& gold) {
    std::set<std::string> v = data::surgtoolloc_tools();
    v.insert(gold.begin(), gold.end());
    return v;
}

namespace {

template <class T>
SetDetail compare_sets(const std::set<T>& predicted, const std::set<T>& gold) {
    SetDetail d;
    d.predicted = predicted.size();
    d.gold = gold.size();
    for (const auto& p : predicted) d.true_positives += gold.count(p);
    return d;
}

template <class G>
const G& expect_gold(TaskName task, const GoldLabel& gold) {
    if (const G* g = std::get_if<G>(&gold)) return *g;
    throw ConfigError(fmt::format("gold label type does not fit task {}", to_string(task)));
}

}  // namespace

ScoreOutcome score_record(TaskName task, std::string_view response, const GoldLabel& gold) {
    ScoreOutcome out;
    switch (task) {
        case TaskName::MedQa:
        case TaskName::MedMcqaSurgery: {
            const auto& g = expect_gold<McGold>(task, gold);
            const auto letter = extract_mc_choice(response, g.options);
            out.extracted = letter.value_or("");
            out.correct = letter && *letter == g.answer;
            break;
        }
        case TaskName::PhaseRecognition:
        case TaskName::ActionRecognition: {
            const auto& g = expect_gold<std::string>(task, gold);
            const std::string label = normalize_text(g);
            out.correct = !label.empty() && contains_phrase(normalize_text(response), label);
            if (out.correct) out.extracted = g;
            break;
        }
        case TaskName::ToolRecognition: {
            const auto& g = expect_gold<ToolSet>(task, gold);
            ToolSet norm_gold;
            for (const auto& t : g) norm_gold.insert(normalize_text(t));
            const ToolSet parsed = parse_tools(response, tool_vocabulary(g));
            ToolSet norm_parsed;
            for (const auto& t : parsed) norm_parsed.insert(normalize_text(t));
            out.detail = compare_sets(norm_parsed, norm_gold);
            out.correct = norm_parsed == norm_gold;
            out.extracted = data::join_with_conjunction({parsed.begin(), parsed.end()});
            break;
        }
        case TaskName::TripletRecognition: {
            const auto& g = expect_gold<TripletSet>(task, gold);
            TripletSet norm_gold;
            for (const auto& t : g) {
                norm_gold.insert({normalize_text(t.instrument), normalize_text(t.verb), normalize_text(t.target)});
            }
            const ParsedTriplets parsed = parse_triplets(response);
            out.detail = compare_sets(parsed.triplets, norm_gold);
            out.correct = parsed.triplets == norm_gold;
            out.extracted = format_triplets(parsed.triplets);
            out.skipped_groups = parsed.skipped;
            break;
        }
    }
    return out;
}

}  // namespace gpvls::bench
