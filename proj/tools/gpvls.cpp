#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpvls/cli/commands.hpp"
#include "gpvls/errors.hpp"

namespace {

using namespace gpvls;

std::vector<bench::TaskName> split_tasks(const std::string& list) {
    std::vector<bench::TaskName> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const std::size_t comma = std::min(list.find(',', start), list.size());
        const std::string name = list.substr(start, comma - start);
        if (!name.empty()) out.push_back(bench::parse_task(name));
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surgical VLM dataset builder, toy trainer and benchmark runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::string dataset;
    std::string adapter;
    std::string tasks;
    std::string format = "markdown";
    std::vector<std::string> report_files;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Run config (JSON)")->required();
        cmd->add_option("--seed", seed, "Override the config seed");
        cmd->add_option("--output-dir", output_dir, "Override the config output directory");
    };

    CLI::App* build = app.add_subcommand("build", "Build VQA datasets and manifests");
    add_config(build);
    build->add_option("--dataset", dataset, "Only this dataset (e.g. cholect50_phase)");

    CLI::App* train = app.add_subcommand("train", "Instruction-tune the toy model");
    add_config(train);
    train->add_option("--dataset", dataset, "Override the training dataset");

    CLI::App* evaluate = app.add_subcommand("evaluate", "Run the benchmark with one adapter");
    add_config(evaluate);
    evaluate->add_option("--adapter", adapter, "Adapter name from the config")->required();
    evaluate->add_option("--tasks", tasks, "Comma-separated task names");
    evaluate->add_option("--format", format, "markdown, csv or json");

    CLI::App* report = app.add_subcommand("report", "Merge report files into one table");
    report->add_option("reports", report_files, "Report JSON files")->required();
    report->add_option("--format", format, "markdown, csv or json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitInput;
    }

    auto load = [&]() {
        cli::Overrides overrides;
        overrides.seed = seed;
        if (output_dir) overrides.output_dir = *output_dir;
        return cli::load_config(config_path, overrides);
    };

    if (*report) {
        return cli::run_guarded(
            [&] { return cli::cmd_report({report_files.begin(), report_files.end()}, bench::parse_format(format),
                                         std::cout, std::cerr); },
            std::cerr);
    }
    return cli::run_guarded(
        [&] {
            cli::RunConfig config = load();
            if (*build) {
                std::optional<data::SourceDataset> selected;
                if (!dataset.empty()) selected = data::parse_source(dataset);
                return cli::cmd_build(config, selected, std::cout, std::cerr);
            }
            if (*train) {
                if (!dataset.empty()) config.train.dataset = data::parse_source(dataset);
                return cli::cmd_train_toy(config, std::cout, std::cerr);
            }
            const auto selected = tasks.empty() ? config.bench.tasks : split_tasks(tasks);
            return cli::cmd_evaluate(config, adapter, selected, bench::parse_format(format), std::cout, std::cerr);
        },
        std::cerr);
}
