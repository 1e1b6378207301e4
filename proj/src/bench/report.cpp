#include "gpvls/bench/report.hpp"

#include <cmath>

#include <fmt/core.h>

#include "gpvls/errors.hpp"
#include "json.hpp"

namespace gpvls::bench {

using nlohmann::ordered_json;

ReportFormat parse_format(std::string_view name) {
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw ConfigError(fmt::format("unknown report format '{}'", name));
}

double round1(double value) { return std::round(value * 10.0) / 10.0; }

std::string render_report_json(const ScoreReport& report) {
    ordered_json j;
    j["model"] = report.model;
    ordered_json tasks = ordered_json::object();
    for (TaskName t : kAllTasks) {
        auto it = report.tasks.find(t);
        if (it == report.tasks.end()) continue;
        const TaskScore& s = it->second;
        ordered_json e;
        e["accuracy"] = s.accuracy();
        e["correct"] = s.correct;
        e["total"] = s.total;
        e["failures"] = s.failures;
        if (s.set) {
            const double p = s.set->precision(), r = s.set->recall();
            e["precision"] = p;
            e["recall"] = r;
            e["f1"] = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
            e["true_positives"] = s.set->true_positives;
            e["predicted"] = s.set->predicted;
            e["gold"] = s.set->gold;
        }
        tasks[std::string(to_string(t))] = e;
    }
    j["tasks"] = tasks;
    return j.dump(2) + "\n";
}

ScoreReport parse_report_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ScoreReport r;
        r.model = j.at("model").get<std::string>();
        for (const auto& [name, e] : j.at("tasks").items()) {
            TaskScore s;
            s.correct = e.at("correct").get<std::size_t>();
            s.total = e.at("total").get<std::size_t>();
            s.failures = e.value("failures", std::size_t{0});
            if (e.contains("true_positives")) {
                s.set = SetDetail{e.at("true_positives").get<std::size_t>(), e.at("predicted").get<std::size_t>(),
                                  e.at("gold").get<std::size_t>()};
            }
            r.tasks[parse_task(name)] = s;
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("invalid report JSON: {}", e.what()));
    }
}

ReportTable to_table(const std::vector<ScoreReport>& reports) {
    ReportTable table;
    for (const auto& r : reports) {
        ReportRow row;
        row.model = r.model;
        for (std::size_t c = 0; c < kAllTasks.size(); ++c) {
            auto it = r.tasks.find(kAllTasks[c]);
            if (it != r.tasks.end()) row.values[c] = round1(it->second.accuracy());
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

namespace {

std::string cell(const std::optional<double>& v, std::string_view empty) {
    return v ? fmt::format("{:.1f}", *v) : std::string(empty);
}

std::string escape_markdown(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos && !s.empty() && s.front() != ' ' && s.back() != ' ') return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

std::optional<double> parse_value(const std::string& s) {
    if (s.empty() || s == "-") return std::nullopt;
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ValidationError(fmt::format("'{}' is not a number", s));
    }
    if (used != s.size()) throw ValidationError(fmt::format("'{}' is not a number", s));
    return v;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string line(text.substr(pos, end - pos));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        pos = end + 1;
    }
    return lines;
}

std::vector<std::string> markdown_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool started = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '\\' && i + 1 < line.size()) {
            cur.push_back(line[++i]);
        } else if (c == '|') {
            if (started) cells.push_back(trim(cur));
            started = true;
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return cells;
}

/// RFC 4180 fields of one CSV document; quoted fields may contain separators and newlines.
std::vector<std::vector<std::string>> csv_rows(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n') {
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else if (c != '\r') {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) throw ValidationError("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> header_titles() {
    std::vector<std::string> h = {"Model"};
    for (TaskName t : kAllTasks) h.emplace_back(column_title(t));
    return h;
}

ReportRow row_from_cells(const std::vector<std::string>& header, const std::vector<std::string>& cells) {
    if (cells.size() != header.size()) {
        throw ValidationError(fmt::format("row has {} cells, header has {}", cells.size(), header.size()));
    }
    ReportRow row;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "Model") {
            row.model = cells[i];
            continue;
        }
        bool known = false;
        for (std::size_t c = 0; c < kAllTasks.size(); ++c) {
            if (column_title(kAllTasks[c]) == header[i]) {
                row.values[c] = parse_value(cells[i]);
                known = true;
            }
        }
        if (!known) throw ValidationError(fmt::format("unknown column '{}'", header[i]));
    }
    return row;
}

}  // namespace

std::string render_table(const ReportTable& table, ReportFormat format) {
    const auto header = header_titles();
    std::string out;
    switch (format) {
        case ReportFormat::Markdown: {
            out += "|";
            for (const auto& h : header) out += " " + h + " |";
            out += "\n|";
            for (std::size_t i = 0; i < header.size(); ++i) out += i == 0 ? "---|" : "---:|";
            out += "\n";
            for (const auto& r : table.rows) {
                out += "| " + escape_markdown(r.model) + " |";
                for (const auto& v : r.values) out += " " + cell(v, "-") + " |";
                out += "\n";
            }
            return out;
        }
        case ReportFormat::Csv: {
            for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
            out += "\n";
            for (const auto& r : table.rows) {
                out += quote_csv(r.model);
                for (const auto& v : r.values) out += "," + cell(v, "");
                out += "\n";
            }
            return out;
        }
        case ReportFormat::Json: {
            ordered_json j;
            j["columns"] = header;
            ordered_json rows = ordered_json::array();
            for (const auto& r : table.rows) {
                ordered_json row;
                row["Model"] = r.model;
                for (std::size_t c = 0; c < kAllTasks.size(); ++c) {
                    row[std::string(column_title(kAllTasks[c]))] =
                        r.values[c] ? ordered_json(*r.values[c]) : ordered_json(nullptr);
                }
                rows.push_back(row);
            }
            j["rows"] = rows;
            return j.dump(2) + "\n";
        }
    }
    return out;
}

ReportTable parse_table(std::string_view text, ReportFormat format) {
    ReportTable table;
    switch (format) {
        case ReportFormat::Markdown: {
            std::vector<std::string> header;
            bool separator_seen = false;
            for (const auto& line : split_lines(text)) {
                const std::string t = trim(line);
                if (t.empty() || t.front() != '|') continue;
                auto cells = markdown_cells(t);
                if (header.empty()) {
                    header = std::move(cells);
                    continue;
                }
                if (!separator_seen) {
                    separator_seen = true;
                    continue;
                }
                table.rows.push_back(row_from_cells(header, cells));
            }
            if (header.empty()) throw ValidationError("markdown table has no header");
            return table;
        }
        case ReportFormat::Csv: {
            const auto rows = csv_rows(text);
            if (rows.empty()) throw ValidationError("CSV table has no header");
            for (std::size_t i = 1; i < rows.size(); ++i) table.rows.push_back(row_from_cells(rows[0], rows[i]));
            return table;
        }
        case ReportFormat::Json: {
            try {
                const auto j = nlohmann::json::parse(text);
                for (const auto& r : j.at("rows")) {
                    ReportRow row;
                    row.model = r.at("Model").get<std::string>();
                    for (std::size_t c = 0; c < kAllTasks.size(); ++c) {
                        const std::string key(column_title(kAllTasks[c]));
                        if (r.contains(key) && !r[key].is_null()) row.values[c] = r[key].get<double>();
                    }
                    table.rows.push_back(std::move(row));
                }
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError(fmt::format("invalid table JSON: {}", e.what()));
            }
            return table;
        }
    }
    return table;
}

std::string render_report(const ScoreReport& report, ReportFormat format) {
    if (format == ReportFormat::Json) return render_report_json(report);
    return render_table(to_table({report}), format);
}

}  // namespace gpvls::bench
