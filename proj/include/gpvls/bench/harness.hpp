#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpvls/adapters/adapter.hpp"
#include "gpvls/bench/scoring.hpp"
#include "gpvls/data/record.hpp"

namespace gpvls::bench {

struct BenchmarkTask {
    TaskName name;
    std::vector<data::VQARecord> records;
    std::vector<GoldLabel> gold;  // parallel to records
};

/// Test-split JSONL plus its gold sidecar. Throws ConfigError when a record has no gold entry
/// or a label does not fit the task.
BenchmarkTask load_task(TaskName name, const std::filesystem::path& jsonl, const std::filesystem::path& gold);
BenchmarkTask make_task(TaskName name, std::vector<data::VQARecord> records, const nlohmann::ordered_json& gold);

struct TaskScore {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t failures = 0;         // records whose query failed after retries
    std::optional<SetDetail> set;     // micro counts for tool/triplet tasks

    double accuracy() const;          // percent; 0 for an empty task
    friend bool operator==(const TaskScore&, const TaskScore&) = default;
};

struct ScoreReport {
    std::string model;
    std::map<TaskName, TaskScore> tasks;
    friend bool operator==(const ScoreReport&, const ScoreReport&) = default;
};

/// Adds one outcome to a task score.
void accumulate(TaskScore& score, const ScoreOutcome& outcome, bool failed);

struct RunConfig {
    std::size_t parallelism = 4;
    double failure_threshold = 0.2;
    adapters::RetryPolicy retry;
    adapters::Sleeper sleep;                   // empty: real sleep
    std::string system_preamble;
    int max_tokens = 256;
    std::filesystem::path image_root;          // vision task images must exist under it
    std::optional<std::filesystem::path> cache_dir;
    std::optional<std::filesystem::path> audit_path;
};

struct AuditEntry {
    std::string record_id;
    TaskName task;
    std::string prompt;
    std::string response;
    std::string extracted;
    bool correct = false;
    bool cached = false;
    std::string error;
};

struct RunResult {
    ScoreReport report;
    std::vector<AuditEntry> audit;
};

/// Probes the adapter, queries it once per record (through the cache when configured),
/// scores, and aggregates in record order. Throws ConfigError for an unhealthy adapter, a
/// vision task on a text-only adapter, or missing images; RunQualityError when the failure
/// rate exceeds the threshold (after writing the audit log). Replay misses propagate.
RunResult run_benchmark(adapters::ModelAdapter& adapter, const std::vector<BenchmarkTask>& tasks,
                        const RunConfig& config);

std::string serialize_audit(const std::vector<AuditEntry>& audit);

}  // namespace gpvls::bench
