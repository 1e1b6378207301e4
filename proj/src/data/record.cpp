#include "gpvls/data/record.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "gpvls/errors.hpp"
#include "json.hpp"

namespace gpvls::data {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::pair<SourceDataset, std::string_view>, 11> kSourceNames = {{
    {SourceDataset::SarVqa, "sar_vqa"},
    {SourceDataset::Cholect50Phase, "cholect50_phase"},
    {SourceDataset::Cholect50Triplet, "cholect50_triplet"},
    {SourceDataset::SurgToolLoc, "surgtoolloc"},
    {SourceDataset::SynthSsg, "synthssg"},
    {SourceDataset::MedQa, "medqa"},
    {SourceDataset::MedMcqa, "medmcqa"},
    {SourceDataset::MedMcqaSurgery, "medmcqa_surgery"},
    {SourceDataset::Flashcards, "flashcards"},
    {SourceDataset::MedInstruct, "medinstruct"},
    {SourceDataset::SurgTbQa, "surgtb_qa"},
}};

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

int compare_ids(const std::string& a, const std::string& b) {
    if (all_digits(a) && all_digits(b)) {
        const auto ta = a.find_first_not_of('0'), tb = b.find_first_not_of('0');
        const std::string_view na = ta == std::string::npos ? "" : std::string_view(a).substr(ta);
        const std::string_view nb = tb == std::string::npos ? "" : std::string_view(b).substr(tb);
        if (na.size() != nb.size()) return na.size() < nb.size() ? -1 : 1;
        if (const int c = na.compare(nb); c != 0) return c;
    }
    return a.compare(b);
}

}  // namespace

std::string_view to_string(SourceDataset source) {
    for (const auto& [s, name] : kSourceNames) {
        if (s == source) return name;
    }
    return "unknown";
}

SourceDataset parse_source(std::string_view name) {
    for (const auto& [s, n] : kSourceNames) {
        if (n == name) return s;
    }
    throw ValidationError(fmt::format("unknown source dataset '{}'", name));
}

const std::vector<SourceDataset>& all_sources() {
    static const std::vector<SourceDataset> kAll = [] {
        std::vector<SourceDataset> v;
        for (const auto& [s, n] : kSourceNames) v.push_back(s);
        return v;
    }();
    return kAll;
}

bool is_vision(SourceDataset source) {
    switch (source) {
        case SourceDataset::SarVqa:
        case SourceDataset::Cholect50Phase:
        case SourceDataset::Cholect50Triplet:
        case SourceDataset::SurgToolLoc:
        case SourceDataset::SynthSsg:
            return true;
        default:
            return false;
    }
}

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    throw ValidationError(fmt::format("unknown split '{}'", name));
}

std::string_view to_string(Role role) { return role == Role::User ? "user" : "assistant"; }

void VQARecord::validate() const {
    if (id.empty()) throw ValidationError("record id is empty");
    if (turns.empty()) throw ValidationError(fmt::format("record '{}' has no turns", id));
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const Role expected = i % 2 == 0 ? Role::User : Role::Assistant;
        if (turns[i].role != expected) {
            throw ValidationError(fmt::format("record '{}': turn {} should be {}", id, i, to_string(expected)));
        }
        if (turns[i].text.empty()) {
            throw ValidationError(fmt::format("record '{}': turn {} has empty text", id, i));
        }
    }
    if (turns.size() % 2 != 0) {
        throw ValidationError(fmt::format("record '{}': last user turn has no assistant reply", id));
    }
    if (is_vision(source_dataset) != image_ref.has_value()) {
        throw ValidationError(fmt::format("record '{}': image_ref must be {} for source {}", id,
                                          is_vision(source_dataset) ? "present" : "absent",
                                          to_string(source_dataset)));
    }
    if (image_ref && image_ref->empty()) throw ValidationError(fmt::format("record '{}': empty image_ref", id));
}

VQARecord make_single_turn(std::string id, std::optional<std::string> image_ref, SourceDataset source,
                           Split split, std::string question, std::string answer) {
    return VQARecord{std::move(id),
                     std::move(image_ref),
                     source,
                     split,
                     {{Role::User, std::move(question)}, {Role::Assistant, std::move(answer)}}};
}

std::string serialize_record(const VQARecord& record) {
    record.validate();
    ordered_json j;
    j["id"] = record.id;
    j["image_ref"] = record.image_ref ? ordered_json(*record.image_ref) : ordered_json(nullptr);
    j["source_dataset"] = to_string(record.source_dataset);
    j["split"] = to_string(record.split);
    ordered_json turns = ordered_json::array();
    for (const Turn& t : record.turns) turns.push_back({{"role", to_string(t.role)}, {"text", t.text}});
    j["turns"] = std::move(turns);
    try {
        return j.dump();
    } catch (const nlohmann::json::type_error& e) {
        throw ValidationError(fmt::format("record '{}' is not valid UTF-8: {}", record.id, e.what()));
    }
}

VQARecord parse_record(std::string_view line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("record is not valid JSON: {}", e.what()));
    }
    if (!j.is_object()) throw ValidationError("record is not a JSON object");
    static const std::array<std::string_view, 5> kKeys = {"id", "image_ref", "source_dataset", "split", "turns"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
            throw ValidationError(fmt::format("record has unknown key '{}'", key));
        }
    }
    VQARecord r;
    try {
        r.id = j.at("id").get<std::string>();
        const auto& img = j.at("image_ref");
        if (!img.is_null()) r.image_ref = img.get<std::string>();
        r.source_dataset = parse_source(j.at("source_dataset").get<std::string>());
        r.split = parse_split(j.at("split").get<std::string>());
        for (const auto& t : j.at("turns")) {
            if (t.size() != 2) throw ValidationError("turn must have exactly role and text");
            const auto role = t.at("role").get<std::string>();
            if (role != "user" && role != "assistant") {
                throw ValidationError(fmt::format("unknown role '{}'", role));
            }
            r.turns.push_back({role == "user" ? Role::User : Role::Assistant, t.at("text").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("record has a missing or mistyped field: {}", e.what()));
    }
    r.validate();
    return r;
}

std::string serialize_jsonl(const std::vector<VQARecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += serialize_record(r);
        out.push_back('\n');
    }
    return out;
}

std::vector<VQARecord> parse_jsonl(std::string_view text) {
    std::vector<VQARecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        ++line_no;
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        try {
            out.push_back(parse_record(line));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("line {}: {}", line_no, e.what()));
        }
    }
    return out;
}

std::vector<VQARecord> read_jsonl(const std::filesystem::path& path) {
    try {
        return parse_jsonl(read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<VQARecord>& records) {
    write_file(path, serialize_jsonl(records));
}

std::string format_triplet(const TripletLabel& t) {
    return fmt::format("<{}, {}, {}>", t.instrument, t.verb, t.target);
}

bool frame_order(const FrameAnnotation& a, const FrameAnnotation& b) {
    if (const int c = compare_ids(a.video_id, b.video_id); c != 0) return c < 0;
    return compare_ids(a.frame_id, b.frame_id) < 0;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace gpvls::data
