#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gpvls/bench/harness.hpp"
#include "gpvls/bench/report.hpp"
#include "gpvls/cli/config.hpp"
#include "gpvls/data/manifest.hpp"

namespace gpvls::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitInput = 2,
    kExitNumeric = 3,
    kExitQuality = 4,
};

/// Runs a command body and maps its exceptions to exit codes, printing the message to err.
int run_guarded(const std::function<int()>& body, std::ostream& err);

struct BuildSummary {
    struct Output {
        data::SourceDataset source;
        data::Split split;
        data::DatasetManifest manifest;
        std::vector<data::Finding> findings;
    };
    std::vector<Output> outputs;

    bool clean() const;
};

/// Builds every configured dataset (or only `dataset`) into
/// <output_dir>/<dataset>/{<split>.jsonl, <split>.manifest.json, <split>.gold.json, rejections.jsonl}.
/// Throws ConfigError for missing inputs.
BuildSummary build_datasets(const RunConfig& config, std::optional<data::SourceDataset> dataset = std::nullopt);
int cmd_build(const RunConfig& config, std::optional<data::SourceDataset> dataset, std::ostream& out,
              std::ostream& err);

struct TrainSummary {
    std::size_t start_step = 0;
    std::size_t final_step = 0;
    std::size_t records = 0;
    double final_loss = 0.0;  // pre-update loss of the last step taken
    /// Greedy decoding of every training record under its training layout.
    std::size_t answer_tokens = 0;
    std::size_t reproduced_tokens = 0;
    double reproduction() const;
};

/// Instruction-tunes the toy model on the built dataset named by config.train. Appends to the
/// loss CSV when resuming. Throws TrainingError naming the step when the loss goes non-finite.
TrainSummary train_toy(const RunConfig& config);
int cmd_train_toy(const RunConfig& config, std::ostream& out, std::ostream& err);

struct EvaluateResult {
    bench::RunResult run;
    std::filesystem::path report_path;
    std::filesystem::path audit_path;
};

/// Loads the tasks, runs the named adapter, and writes <reports_dir>/<adapter>.json plus the
/// audit log <reports_dir>/<adapter>.audit.jsonl.
EvaluateResult evaluate(const RunConfig& config, const std::string& adapter_name,
                        const std::vector<bench::TaskName>& tasks, const adapters::Sleeper& sleep = {});
int cmd_evaluate(const RunConfig& config, const std::string& adapter_name, const std::vector<bench::TaskName>& tasks,
                 bench::ReportFormat format, std::ostream& out, std::ostream& err);

/// Merges single-model report files into one table, one row per file in argument order.
std::string merge_reports(const std::vector<std::filesystem::path>& reports, bench::ReportFormat format);
int cmd_report(const std::vector<std::filesystem::path>& reports, bench::ReportFormat format, std::ostream& out,
               std::ostream& err);

}  // namespace gpvls::cli
