#include "gpvls/data/readers.hpp"

#include <algorithm>
#include <fstream>

#include <boost/tokenizer.hpp>
#include <fmt/core.h>

#include "gpvls/errors.hpp"
#include "json.hpp"

namespace gpvls::data {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::vector<std::string> csv_fields(const std::string& line) {
    using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
    // Backslash is not an escape in these files; use a byte that never occurs.
    boost::escaped_list_separator<char> sep('\x01', ',', '"');
    Tokenizer tok(line, sep);
    std::vector<std::string> out;
    for (const auto& f : tok) out.push_back(trim(f));
    return out;
}

}  // namespace

SplitAssignment SplitAssignment::load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("{}: invalid split config: {}", path.string(), e.what()));
    }
    SplitAssignment out;
    for (const auto& [name, split] : {std::pair{"train", Split::Train}, std::pair{"test", Split::Test}}) {
        if (!j.contains(name)) continue;
        for (const auto& v : j.at(name)) {
            const std::string id = v.is_string() ? v.get<std::string>() : v.dump();
            if (auto prior = out.lookup(id); prior && *prior != split) {
                throw ValidationError(fmt::format("{}: video '{}' listed in both splits", path.string(), id));
            }
            out.assign(id, split);
        }
    }
    return out;
}

void SplitAssignment::assign(const std::string& video_id, Split split) { videos_[video_id] = split; }

std::optional<Split> SplitAssignment::lookup(const std::string& video_id) const {
    auto it = videos_.find(video_id);
    if (it == videos_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> parse_tool_field(const std::string& field) {
    const std::string f = trim(field);
    std::vector<std::string> parts;
    if (!f.empty() && f.front() == '[') {
        if (f.back() != ']') throw ValidationError(fmt::format("unterminated tool list '{}'", field));
        parts = split_on(f.substr(1, f.size() - 2), ',');
    } else {
        parts = split_on(f, ';');
    }
    std::vector<std::string> out;
    for (auto& p : parts) {
        if (p.size() >= 2 && (p.front() == '\'' || p.front() == '"') && p.back() == p.front()) {
            p = p.substr(1, p.size() - 2);
        }
        if (p.empty() || p == "nan") continue;
        out.push_back(p);
    }
    return out;
}

std::vector<TripletLabel> parse_triplet_field(const std::string& field) {
    std::vector<TripletLabel> out;
    if (trim(field).empty()) return out;
    for (const auto& group : split_on(field, ';')) {
        if (group.empty()) continue;
        const auto parts = split_on(group, ':');
        if (parts.size() != 3) throw ValidationError(fmt::format("malformed triplet '{}'", group));
        out.push_back({parts[0], parts[1], parts[2]});
    }
    return out;
}

AnnotationReadResult read_annotations_csv(const std::filesystem::path& path, AnnotationKind kind,
                                          const SplitAssignment* splits) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open annotations {}", path.string()));
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(fmt::format("{}: empty annotation file", path.string()));
    const std::vector<std::string> header = csv_fields(line);
    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto c_video = column("video_id"), c_frame = column("frame_id"), c_split = column("split");
    const auto c_image = column("image_ref"), c_action = column("action"), c_phase = column("phase");
    const auto c_triplets = column("triplets"), c_tools = column("tools");
    auto require = [&](bool ok, std::string_view what) {
        if (!ok) throw ValidationError(fmt::format("{}: missing column {}", path.string(), what));
    };
    require(c_video && c_frame, "video_id/frame_id");
    if (!splits) require(c_split.has_value(), "split (no split config given)");
    switch (kind) {
        case AnnotationKind::SarRarp50: require(c_action.has_value(), "action"); break;
        case AnnotationKind::CholecT50: require(c_phase || c_triplets, "phase or triplets"); break;
        case AnnotationKind::SurgToolLoc: require(c_tools.has_value(), "tools"); break;
    }

    AnnotationReadResult result;
    std::map<std::string, Split> seen_split;
    std::size_t line_no = 1, row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::size_t index = row++;
        std::vector<std::string> f;
        std::string ref = fmt::format("line {}", line_no);
        try {
            f = csv_fields(line);
        } catch (const boost::escaped_list_error& e) {
            result.rejections.push_back({index, line_no, ref, fmt::format("malformed CSV: {}", e.what()), false});
            continue;
        }
        auto get = [&](std::optional<std::size_t> c) -> std::optional<std::string> {
            if (!c || *c >= f.size()) return std::nullopt;
            return f[*c];
        };
        FrameAnnotation a;
        a.video_id = get(c_video).value_or("");
        a.frame_id = get(c_frame).value_or("");
        a.source_line = line_no;
        ref = a.video_id + "/" + a.frame_id;
        auto reject = [&](std::string reason) {
            result.rejections.push_back({index, line_no, ref, std::move(reason), false});
        };
        if (f.size() != header.size()) {
            reject(fmt::format("line {}: expected {} fields, found {}", line_no, header.size(), f.size()));
            continue;
        }
        try {
            std::optional<Split> row_split;
            if (auto s = get(c_split); s && !s->empty()) row_split = parse_split(*s);
            if (splits) {
                const auto assigned = splits->lookup(a.video_id);
                if (!assigned) {
                    reject(fmt::format("video '{}' not in split config", a.video_id));
                    continue;
                }
                if (row_split && *row_split != *assigned) {
                    reject(fmt::format("row split '{}' disagrees with split config", to_string(*row_split)));
                    continue;
                }
                a.split = *assigned;
            } else {
                if (!row_split) {
                    reject("missing split");
                    continue;
                }
                a.split = *row_split;
            }
            auto [it, inserted] = seen_split.emplace(a.video_id, a.split);
            if (!inserted && it->second != a.split) {
                reject(fmt::format("video '{}' assigned to both splits", a.video_id));
                continue;
            }
            if (auto img = get(c_image); img && !img->empty()) a.image_ref = *img;
            if (auto act = get(c_action); act && !act->empty()) {
                const bool numeric = std::all_of(act->begin(), act->end(), [](unsigned char c) { return std::isdigit(c); });
                if (numeric) {
                    const std::size_t id = std::stoul(*act);
                    if (id >= sar_rarp50_actions().size()) throw ValidationError(fmt::format("unknown action id {}", id));
                    a.action = sar_rarp50_actions()[id];
                } else {
                    a.action = *act;
                }
            }
            if (auto ph = get(c_phase); ph && !ph->empty()) a.phase = *ph;
            if (c_triplets) a.triplets = parse_triplet_field(get(c_triplets).value_or(""));
            if (c_tools) a.tools = parse_tool_field(get(c_tools).value_or(""));
        } catch (const ValidationError& e) {
            reject(fmt::format("line {}: {}", line_no, e.what()));
            continue;
        }
        result.annotations.push_back(std::move(a));
    }
    return result;
}

}  // namespace gpvls::data
