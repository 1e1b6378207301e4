#include "gpvls/data/builders.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <variant>

#include <fmt/core.h>

#include "gpvls/errors.hpp"

namespace gpvls::data {

using ordered_json = nlohmann::ordered_json;

std::string_view canonical_question(SourceDataset source) {
    switch (source) {
        case SourceDataset::SarVqa: return kActionQuestion;
        case SourceDataset::Cholect50Phase: return kPhaseQuestion;
        case SourceDataset::Cholect50Triplet: return kTripletQuestion;
        case SourceDataset::SurgToolLoc: return kToolQuestion;
        default: return {};
    }
}

std::size_t BuildResult::excluded_count() const {
    return static_cast<std::size_t>(
        std::count_if(rejections.begin(), rejections.end(), [](const Rejection& r) { return r.excluded; }));
}

const std::vector<std::string>& sar_rarp50_actions() {
    static const std::vector<std::string> kActions = {
        "other",
        "picking-up the needle",
        "positioning the needle tip",
        "pushing the needle through the tissue",
        "pulling the needle out of the tissue",
        "tying a knot",
        "cutting the suture",
        "returning/dropping the needle",
    };
    return kActions;
}

const std::set<std::string>& surgtoolloc_tools() {
    static const std::set<std::string> kTools = {
        "bipolar dissector",      "bipolar forceps",           "cadiere forceps",
        "clip applier",           "force bipolar",             "grasping retractor",
        "monopolar curved scissors", "needle driver",          "permanent cautery hook/spatula",
        "prograsp forceps",       "stapler",                   "suction irrigator",
        "tip-up fenestrated grasper", "vessel sealer",
    };
    return kTools;
}

const std::set<std::string>& cholect50_instruments() {
    static const std::set<std::string> kSet = {"grasper", "bipolar", "hook", "scissors", "clipper", "irrigator"};
    return kSet;
}

const std::set<std::string>& cholect50_verbs() {
    static const std::set<std::string> kSet = {"grasp", "retract", "dissect", "coagulate", "clip",
                                               "cut",   "aspirate", "irrigate", "pack",    "null_verb"};
    return kSet;
}

const std::set<std::string>& cholect50_targets() {
    static const std::set<std::string> kSet = {
        "gallbladder", "cystic_plate", "cystic_duct",  "cystic_artery", "cystic_pedicle",
        "blood_vessel", "fluid",       "abdominal_wall_cavity", "liver", "adhesion",
        "omentum",     "peritoneum",   "gut",          "specimen_bag",  "null_target"};
    return kSet;
}

BuilderOptions default_builder_options() {
    BuilderOptions o;
    o.tool_vocabulary = surgtoolloc_tools();
    o.instruments = cholect50_instruments();
    o.verbs = cholect50_verbs();
    o.targets = cholect50_targets();
    return o;
}

std::string join_with_conjunction(std::vector<std::string> items) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    if (items.empty()) return {};
    if (items.size() == 1) return items[0];
    if (items.size() == 2) return items[0] + " and " + items[1];
    std::string out;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) out += items[i] + ", ";
    return out + "and " + items.back();
}

std::string action_answer(std::string_view action) { return fmt::format("The surgical action is {}.", action); }

std::string phase_answer(std::string_view phase) { return fmt::format("The surgical phase is {}.", phase); }

std::string tool_answer(const std::vector<std::string>& tools) {
    if (tools.empty()) return "No surgical tools are present.";
    return fmt::format("The surgical tools present are {}.", join_with_conjunction(tools));
}

std::string triplet_answer(const std::vector<TripletLabel>& triplets) {
    if (triplets.empty()) return "No surgical action triplets are present.";
    std::vector<TripletLabel> sorted = triplets;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::string body;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i > 0) body += ", ";
        body += format_triplet(sorted[i]);
    }
    return fmt::format("The surgical action triplet(s) are {}.", body);
}

namespace {

struct Labelled {
    std::string answer;
    ordered_json gold;
};

/// Either the answer for a frame or the reason it was rejected.
using Extraction = std::variant<Labelled, std::string>;

std::string resolve_image_ref(const FrameAnnotation& a, const BuilderOptions& options) {
    if (a.image_ref && !a.image_ref->empty()) return *a.image_ref;
    std::string out = options.image_pattern;
    auto replace = [&out](std::string_view key, const std::string& value) {
        for (std::size_t pos; (pos = out.find(key)) != std::string::npos;) out.replace(pos, key.size(), value);
    };
    replace("{video_id}", a.video_id);
    replace("{frame_id}", a.frame_id);
    return out;
}

bool is_lower(const std::string& s) {
    return std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isupper(c); });
}

BuildResult build_frames(SourceDataset source, std::vector<FrameAnnotation> annotations,
                         const BuilderOptions& options,
                         const std::function<Extraction(const FrameAnnotation&)>& extract) {
    std::vector<std::size_t> order(annotations.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return frame_order(annotations[a], annotations[b]);
    });

    BuildResult result;
    const std::string question(canonical_question(source));
    const FrameAnnotation* previous = nullptr;
    for (std::size_t idx : order) {
        const FrameAnnotation& a = annotations[idx];
        const std::string ref = a.video_id + "/" + a.frame_id;
        auto reject = [&](std::string reason) {
            result.rejections.push_back({idx, a.source_line, ref, std::move(reason), false});
        };
        if (a.video_id.empty() || a.frame_id.empty()) {
            reject("missing video_id or frame_id");
            continue;
        }
        if (previous && previous->video_id == a.video_id && previous->frame_id == a.frame_id) {
            reject("duplicate frame");
            continue;
        }
        previous = &a;
        Extraction e = extract(a);
        if (auto* reason = std::get_if<std::string>(&e)) {
            reject(std::move(*reason));
            continue;
        }
        auto& labelled = std::get<Labelled>(e);
        std::string id = fmt::format("{}/{}", to_string(source), ref);
        result.gold[id] = std::move(labelled.gold);
        result.records.push_back(make_single_turn(std::move(id), resolve_image_ref(a, options), source, a.split,
                                                  question, std::move(labelled.answer)));
    }
    std::sort(result.rejections.begin(), result.rejections.end(),
              [](const Rejection& x, const Rejection& y) { return x.index < y.index; });
    return result;
}

}  // namespace

BuildResult build_action_vqa(std::vector<FrameAnnotation> annotations, const BuilderOptions& options) {
    return build_frames(SourceDataset::SarVqa, std::move(annotations), options,
                        [](const FrameAnnotation& a) -> Extraction {
                            if (!a.action || a.action->empty()) return std::string("missing action label");
                            return Labelled{action_answer(*a.action), *a.action};
                        });
}

BuildResult build_phase_vqa(std::vector<FrameAnnotation> annotations, const BuilderOptions& options) {
    return build_frames(SourceDataset::Cholect50Phase, std::move(annotations), options,
                        [](const FrameAnnotation& a) -> Extraction {
                            if (!a.phase || a.phase->empty()) return std::string("missing phase label");
                            return Labelled{phase_answer(*a.phase), *a.phase};
                        });
}

BuildResult build_triplet_vqa(std::vector<FrameAnnotation> annotations, const BuilderOptions& options) {
    return build_frames(
        SourceDataset::Cholect50Triplet, std::move(annotations), options,
        [&options](const FrameAnnotation& a) -> Extraction {
            std::vector<TripletLabel> triplets = a.triplets.value_or(std::vector<TripletLabel>{});
            if (triplets.empty() && options.empty_labels == EmptyLabelPolicy::Reject) {
                return std::string("empty triplet list");
            }
            for (const auto& t : triplets) {
                if (t.instrument.empty() || t.verb.empty() || t.target.empty()) {
                    return std::string("triplet with empty component");
                }
                if (!is_lower(t.instrument) || !is_lower(t.verb) || !is_lower(t.target)) {
                    return fmt::format("triplet {} is not lowercase", format_triplet(t));
                }
                auto check = [](const std::set<std::string>& vocab, const std::string& v) {
                    return vocab.empty() || vocab.contains(v);
                };
                if (!check(options.instruments, t.instrument) || !check(options.verbs, t.verb) ||
                    !check(options.targets, t.target)) {
                    return fmt::format("triplet {} outside the closed vocabulary", format_triplet(t));
                }
            }
            std::sort(triplets.begin(), triplets.end());
            triplets.erase(std::unique(triplets.begin(), triplets.end()), triplets.end());
            ordered_json gold = ordered_json::array();
            for (const auto& t : triplets) gold.push_back({t.instrument, t.verb, t.target});
            return Labelled{triplet_answer(triplets), std::move(gold)};
        });
}

BuildResult build_tool_vqa(std::vector<FrameAnnotation> annotations, const BuilderOptions& options) {
    return build_frames(SourceDataset::SurgToolLoc, std::move(annotations), options,
                        [&options](const FrameAnnotation& a) -> Extraction {
                            std::vector<std::string> tools = a.tools.value_or(std::vector<std::string>{});
                            if (tools.empty() && options.empty_labels == EmptyLabelPolicy::Reject) {
                                return std::string("empty tool list");
                            }
                            for (const auto& t : tools) {
                                if (t.empty()) return std::string("empty tool name");
                                if (!is_lower(t)) return fmt::format("tool '{}' is not lowercase", t);
                                if (!options.tool_vocabulary.empty() && !options.tool_vocabulary.contains(t)) {
                                    return fmt::format("tool '{}' outside the closed vocabulary", t);
                                }
                            }
                            std::sort(tools.begin(), tools.end());
                            tools.erase(std::unique(tools.begin(), tools.end()), tools.end());
                            return Labelled{tool_answer(tools), ordered_json(tools)};
                        });
}

BuildResult ingest_synthssg(const std::vector<SynthSsgItem>& items) {
    BuildResult result;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const SynthSsgItem& item = items[i];
        const std::size_t ordinal = item.line > 0 ? item.line : i + 1;
        const std::string id = fmt::format("synthssg/{}/{:06d}", to_string(item.split), ordinal);
        auto reject = [&](std::string reason) {
            result.rejections.push_back({i, item.line, id, std::move(reason), false});
        };
        if (item.image_ref.empty()) {
            reject("missing image_ref");
            continue;
        }
        if (item.question.empty() || item.answer.empty()) {
            reject("empty question or answer");
            continue;
        }
        if (!seen.insert(id).second) {
            reject("duplicate id");
            continue;
        }
        std::size_t words = 0;
        bool in_word = false;
        for (unsigned char c : item.answer) {
            const bool space = std::isspace(c) != 0;
            if (!space && !in_word) ++words;
            in_word = !space;
        }
        if (words <= 2) result.flags.push_back({id, fmt::format("terse answer ({} word(s))", words)});
        result.records.push_back(
            make_single_turn(id, item.image_ref, SourceDataset::SynthSsg, item.split, item.question, item.answer));
    }
    return result;
}

}  // namespace gpvls::data

namespace gpvls::data {

std::vector<VQARecord> select_split(const std::vector<VQARecord>& records, Split split) {
    std::vector<VQARecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [split](const VQARecord& r) { return r.split == split; });
    return out;
}

nlohmann::ordered_json select_gold(const nlohmann::ordered_json& gold, const std::vector<VQARecord>& records) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& r : records) {
        if (gold.contains(r.id)) out[r.id] = gold.at(r.id);
    }
    return out;
}

}  // namespace gpvls::data
