#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpvls/bench/harness.hpp"

namespace gpvls::bench {

enum class ReportFormat { Markdown, Csv, Json };

ReportFormat parse_format(std::string_view name);  // throws ConfigError

/// Full single-model report: counts plus derived accuracy and set metrics.
std::string render_report_json(const ScoreReport& report);
ScoreReport parse_report_json(std::string_view text);

/// One table row per model, one-decimal accuracies in column order, empty cells for tasks
/// the model was not run on.
struct ReportRow {
    std::string model;
    std::array<std::optional<double>, kAllTasks.size()> values;
    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ReportTable {
    std::vector<ReportRow> rows;
    friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

/// Accuracy rounded half away from zero to one decimal.
double round1(double value);

ReportTable to_table(const std::vector<ScoreReport>& reports);
std::string render_table(const ReportTable& table, ReportFormat format);
/// Inverse of render_table. Throws ValidationError for malformed input.
ReportTable parse_table(std::string_view text, ReportFormat format);

/// Markdown and CSV render the one-row table; JSON renders the full report.
std::string render_report(const ScoreReport& report, ReportFormat format);

}  // namespace gpvls::bench
