#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpvls/adapters/adapter.hpp"
#include "gpvls/adapters/remote.hpp"
#include "gpvls/bench/scoring.hpp"
#include "gpvls/core/model.hpp"
#include "gpvls/data/builders.hpp"
#include "gpvls/data/record.hpp"
#include "json.hpp"

namespace gpvls::cli {

namespace fs = std::filesystem;

/// Inputs of one dataset. Frame-annotated sources read one CSV; the others read one JSON or
/// JSONL file per split.
struct DatasetInputs {
    data::SourceDataset source = data::SourceDataset::SarVqa;
    std::optional<fs::path> annotations;
    std::optional<fs::path> split_config;
    std::map<data::Split, fs::path> items;
    /// Upstream counts the manifests must reproduce.
    std::map<data::Split, std::size_t> reference_counts;
    std::optional<std::size_t> reference_total;
    data::SurgeryPredicate surgery;
};

enum class TurnOrderMode { Random, QuestionFirst, VisualFirst };

struct TrainSettings {
    data::SourceDataset dataset = data::SourceDataset::SynthSsg;
    data::Split split = data::Split::Train;
    fs::path image_root;
    std::size_t steps = 2000;
    double learning_rate = 0.01;
    std::string optimizer = "adam";  // "adam" or "sgd"
    TurnOrderMode first_turn_order = TurnOrderMode::Random;
    /// Stop once the pre-update loss falls below this many nats per token.
    std::optional<double> stop_below;
    core::ModelConfig model;
    fs::path checkpoint;
    fs::path loss_csv;
    bool resume = false;
};

struct AdapterSettings {
    std::string name;
    std::string kind;  // oracle, constant, replay, toy, remote
    std::string text;
    fs::path dir;
    fs::path checkpoint;
    bool accepts_images = true;
    adapters::RemoteConfig remote;
    /// Responses are also written to this replay store when set.
    std::optional<fs::path> record_dir;
};

struct BenchSettings {
    std::vector<bench::TaskName> tasks{bench::kAllTasks.begin(), bench::kAllTasks.end()};
    /// Layout <tasks_dir>/<task>/test.jsonl; defaults to the build output layout.
    std::optional<fs::path> tasks_dir;
    fs::path image_root;
    std::size_t parallelism = 4;
    double failure_threshold = 0.2;
    std::string system_preamble = "You are a surgical assistant. Answer the question concisely.";
    int max_tokens = 256;
    adapters::RetryPolicy retry;
    fs::path reports_dir;
};

struct RunConfig {
    std::optional<std::uint64_t> seed;
    fs::path output_dir;
    std::optional<fs::path> cache_dir;
    data::BuilderOptions builder = data::default_builder_options();
    std::map<data::SourceDataset, DatasetInputs> datasets;
    TrainSettings train;
    BenchSettings bench;
    std::map<std::string, AdapterSettings> adapters;
    /// sha256 of the canonical JSON after overrides.
    std::string hash;

    /// Throws ConfigError when no seed was given.
    std::uint64_t require_seed() const;
    /// <tasks_dir>/<task>/test.jsonl or <output_dir>/<source>/test.jsonl, and its gold sidecar.
    std::pair<fs::path, fs::path> task_files(bench::TaskName task) const;
};

/// Scalar values a command line may override.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> output_dir;
};

/// Validates the document; unknown keys, wrong types and bad enum names raise ConfigError.
/// Relative paths resolve against base_dir; a path starting with "{output_dir}" resolves
/// against the output directory.
RunConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir, const Overrides& overrides = {});
RunConfig load_config(const fs::path& path, const Overrides& overrides = {});

}  // namespace gpvls::cli
