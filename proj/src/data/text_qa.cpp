#include <algorithm>
#include <cctype>

#include <fmt/core.h>

#include "gpvls/data/builders.hpp"
#include "gpvls/errors.hpp"

namespace gpvls::data {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Required non-empty string field; throws ValidationError naming the field.
std::string required_string(const json& item, const char* key) {
    auto it = item.find(key);
    if (it == item.end()) throw ValidationError(fmt::format("missing field '{}'", key));
    if (!it->is_string()) throw ValidationError(fmt::format("field '{}' is not a string", key));
    std::string value = it->get<std::string>();
    if (value.empty()) throw ValidationError(fmt::format("field '{}' is empty", key));
    return value;
}

std::string optional_string(const json& item, const char* key) {
    auto it = item.find(key);
    if (it == item.end() || it->is_null()) return {};
    if (!it->is_string()) throw ValidationError(fmt::format("field '{}' is not a string", key));
    return it->get<std::string>();
}

std::string item_id(SourceDataset source, const RawItem& item, Split split) {
    if (item.value.is_object()) {
        auto it = item.value.find("id");
        if (it != item.value.end()) {
            if (it->is_string() && !it->get<std::string>().empty()) {
                return fmt::format("{}/{}", to_string(source), it->get<std::string>());
            }
            if (it->is_number_integer()) return fmt::format("{}/{}", to_string(source), it->get<long long>());
        }
    }
    return fmt::format("{}/{}/{:06d}", to_string(source), to_string(split), item.line);
}

/// Code points in the CJK ideograph, kana, and full-width ranges.
bool contains_cjk(std::string_view s) {
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = c;
        std::size_t len = 1;
        if (c >= 0xF0) { cp = c & 0x07; len = 4; }
        else if (c >= 0xE0) { cp = c & 0x0F; len = 3; }
        else if (c >= 0xC0) { cp = c & 0x1F; len = 2; }
        for (std::size_t k = 1; k < len && i + k < s.size(); ++k) {
            cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        }
        if ((cp >= 0x3000 && cp <= 0x9FFF) || (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0xFF00 && cp <= 0xFFEF)) {
            return true;
        }
        i += len;
    }
    return false;
}

struct McItem {
    std::string question;
    std::vector<std::pair<std::string, std::string>> options;
    std::string answer;
};

McItem parse_medqa(const json& item) {
    McItem mc;
    mc.question = required_string(item, "question");
    auto opts = item.find("options");
    if (opts == item.end() || !opts->is_object() || opts->empty()) {
        throw ValidationError("field 'options' must be a non-empty object");
    }
    for (const auto& [letter, text] : opts->items()) {
        if (letter.size() != 1 || !std::isupper(static_cast<unsigned char>(letter[0]))) {
            throw ValidationError(fmt::format("option key '{}' is not a capital letter", letter));
        }
        if (!text.is_string() || text.get<std::string>().empty()) {
            throw ValidationError(fmt::format("option {} is not a non-empty string", letter));
        }
        mc.options.emplace_back(letter, text.get<std::string>());
    }
    std::sort(mc.options.begin(), mc.options.end());
    mc.answer = required_string(item, "answer_idx");
    if (std::none_of(mc.options.begin(), mc.options.end(), [&](const auto& o) { return o.first == mc.answer; })) {
        throw ValidationError(fmt::format("answer_idx '{}' is not one of the options", mc.answer));
    }
    return mc;
}

McItem parse_medmcqa(const json& item) {
    McItem mc;
    mc.question = required_string(item, "question");
    const char* keys[] = {"opa", "opb", "opc", "opd"};
    for (int i = 0; i < 4; ++i) mc.options.emplace_back(std::string(1, static_cast<char>('A' + i)), required_string(item, keys[i]));
    auto cop = item.find("cop");
    if (cop == item.end() || cop->is_null()) throw ValidationError("missing correct-answer index 'cop'");
    if (!cop->is_number_integer()) throw ValidationError("field 'cop' is not an integer");
    const long long index = cop->get<long long>();
    if (index < 1 || index > 4) throw ValidationError(fmt::format("cop {} outside 1-4", index));
    mc.answer = std::string(1, static_cast<char>('A' + index - 1));
    return mc;
}

ordered_json mc_gold(const McItem& mc) {
    ordered_json options = ordered_json::array();
    for (const auto& [letter, text] : mc.options) options.push_back({letter, text});
    return {{"answer", mc.answer}, {"options", options}};
}

std::string mc_answer_text(const McItem& mc) {
    for (const auto& [letter, text] : mc.options) {
        if (letter == mc.answer) return fmt::format("{}. {}", letter, text);
    }
    return mc.answer;
}

/// Shared driver: `map` returns the (question, answer, gold) triple or throws ValidationError.
/// A returned nullopt means the item was excluded by a filter rather than rejected.
struct Mapped {
    std::string question;
    std::string answer;
    ordered_json gold;
};

template <class Fn>
BuildResult ingest_items(SourceDataset source, const std::vector<RawItem>& items, Split split, Fn map) {
    BuildResult result;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const RawItem& item = items[i];
        const std::string id = item_id(source, item, split);
        try {
            if (!item.parse_error.empty()) throw ValidationError("invalid JSON: " + item.parse_error);
            if (!item.value.is_object()) throw ValidationError("item is not a JSON object");
            std::optional<Mapped> mapped = map(item.value);
            if (!mapped) {
                result.rejections.push_back({i, item.line, id, "excluded by filter", true});
                continue;
            }
            if (!seen.insert(id).second) throw ValidationError("duplicate id");
            if (!mapped->gold.is_null()) result.gold[id] = std::move(mapped->gold);
            result.records.push_back(make_single_turn(id, std::nullopt, source, split, std::move(mapped->question),
                                                      std::move(mapped->answer)));
        } catch (const ValidationError& e) {
            result.rejections.push_back({i, item.line, id, fmt::format("line {}: {}", item.line, e.what()), false});
        }
    }
    return result;
}

}  // namespace

std::string format_mc_question(std::string_view question,
                               const std::vector<std::pair<std::string, std::string>>& options) {
    std::string out(question);
    out.push_back('\n');
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += fmt::format("{}. {}", options[i].first, options[i].second);
    }
    return out;
}

std::vector<RawItem> read_raw_items(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<RawItem> items;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        json arr;
        try {
            arr = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ValidationError(fmt::format("{}: invalid JSON array: {}", path.string(), e.what()));
        }
        for (std::size_t i = 0; i < arr.size(); ++i) items.push_back({i + 1, std::move(arr[i]), {}});
        return items;
    }
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        ++line_no;
        std::string_view line = std::string_view(text).substr(pos, end - pos);
        pos = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        RawItem item{line_no, nullptr, {}};
        try {
            item.value = json::parse(line);
        } catch (const json::parse_error& e) {
            item.parse_error = e.what();
        }
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<SynthSsgItem> synthssg_items(const std::vector<RawItem>& items, Split split) {
    std::vector<SynthSsgItem> out;
    for (const RawItem& raw : items) {
        SynthSsgItem item;
        item.line = raw.line;
        item.split = split;
        if (raw.parse_error.empty() && raw.value.is_object()) {
            auto str = [&](const char* key) {
                auto it = raw.value.find(key);
                return it != raw.value.end() && it->is_string() ? it->get<std::string>() : std::string();
            };
            item.image_ref = str("image_ref");
            item.question = str("question");
            item.answer = str("answer");
        }
        out.push_back(std::move(item));
    }
    return out;
}

bool SurgeryPredicate::matches(const json& item) const {
    auto field = [&](const char* key) {
        auto it = item.find(key);
        return it != item.end() && it->is_string() ? lower(it->get<std::string>()) : std::string();
    };
    const std::string subject = field("subject_name");
    for (const auto& s : subjects) {
        if (lower(s) == subject) return true;
    }
    const std::string topic = field("topic_name");
    for (const auto& k : topic_keywords) {
        if (!k.empty() && topic.find(lower(k)) != std::string::npos) return true;
    }
    return false;
}

BuildResult filter_medmcqa_surgery(const std::vector<RawItem>& items, const SurgeryPredicate& predicate,
                                   Split split) {
    return ingest_items(SourceDataset::MedMcqaSurgery, items, split, [&](const json& item) -> std::optional<Mapped> {
        if (!predicate.matches(item)) return std::nullopt;
        const McItem mc = parse_medmcqa(item);
        return Mapped{format_mc_question(mc.question, mc.options), mc_answer_text(mc), mc_gold(mc)};
    });
}

BuildResult ingest_text_qa(SourceDataset source, const std::vector<RawItem>& items, Split split) {
    switch (source) {
        case SourceDataset::MedQa:
            return ingest_items(source, items, split, [](const json& item) -> std::optional<Mapped> {
                const std::string language = lower(optional_string(item, "language"));
                if (!language.empty() && language != "en" && language != "english") return std::nullopt;
                const McItem mc = parse_medqa(item);
                if (contains_cjk(mc.question)) return std::nullopt;
                return Mapped{format_mc_question(mc.question, mc.options), mc_answer_text(mc), mc_gold(mc)};
            });
        case SourceDataset::MedMcqa:
            return ingest_items(source, items, split, [](const json& item) -> std::optional<Mapped> {
                const McItem mc = parse_medmcqa(item);
                return Mapped{format_mc_question(mc.question, mc.options), mc_answer_text(mc), mc_gold(mc)};
            });
        case SourceDataset::Flashcards:
            return ingest_items(source, items, split, [](const json& item) -> std::optional<Mapped> {
                if (item.contains("front") || item.contains("back")) {
                    return Mapped{required_string(item, "front"), required_string(item, "back"), nullptr};
                }
                return Mapped{required_string(item, "input"), required_string(item, "output"), nullptr};
            });
        case SourceDataset::MedInstruct:
            return ingest_items(source, items, split, [](const json& item) -> std::optional<Mapped> {
                std::string question = required_string(item, "instruction");
                const std::string input = optional_string(item, "input");
                if (!input.empty() && input != "<noinput>") question += "\n\n" + input;
                return Mapped{std::move(question), required_string(item, "output"), nullptr};
            });
        case SourceDataset::SurgTbQa:
            return ingest_items(source, items, split, [](const json& item) -> std::optional<Mapped> {
                optional_string(item, "source");
                return Mapped{required_string(item, "question"), required_string(item, "answer"), nullptr};
            });
        case SourceDataset::MedMcqaSurgery:
            return filter_medmcqa_surgery(items, SurgeryPredicate{}, split);
        default:
            throw ConfigError(fmt::format("{} is not a text QA source", to_string(source)));
    }
}

}  // namespace gpvls::data
