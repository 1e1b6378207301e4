#include "gpvls/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "gpvls/adapters/remote.hpp"
#include "gpvls/adapters/replay.hpp"
#include "gpvls/adapters/scripted.hpp"
#include "gpvls/adapters/toy.hpp"
#include "gpvls/core/checkpoint.hpp"
#include "gpvls/data/readers.hpp"
#include "gpvls/errors.hpp"
#include "json.hpp"

namespace gpvls::cli {

using data::SourceDataset;
using data::Split;

int run_guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const RunQualityError& e) {
        err << "error: " << e.what() << "\n";
        return kExitQuality;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

namespace {

fs::path require_input(SourceDataset source, const fs::path& path) {
    if (!fs::is_regular_file(path)) {
        throw ConfigError(fmt::format("{}: missing input {}", data::to_string(source), path.string()));
    }
    return path;
}

std::optional<data::AnnotationKind> annotation_kind(SourceDataset source) {
    switch (source) {
        case SourceDataset::SarVqa: return data::AnnotationKind::SarRarp50;
        case SourceDataset::Cholect50Phase:
        case SourceDataset::Cholect50Triplet: return data::AnnotationKind::CholecT50;
        case SourceDataset::SurgToolLoc: return data::AnnotationKind::SurgToolLoc;
        default: return std::nullopt;
    }
}

bool backs_task(SourceDataset source) {
    return std::any_of(bench::kAllTasks.begin(), bench::kAllTasks.end(),
                       [&](bench::TaskName t) { return bench::task_source(t) == source; });
}

void merge(data::BuildResult& into, data::BuildResult part) {
    into.records.insert(into.records.end(), part.records.begin(), part.records.end());
    for (auto& [id, label] : part.gold.items()) into.gold[id] = label;
    into.rejections.insert(into.rejections.end(), part.rejections.begin(), part.rejections.end());
    into.flags.insert(into.flags.end(), part.flags.begin(), part.flags.end());
}

data::BuildResult build_source(const DatasetInputs& in, const data::BuilderOptions& options) {
    if (const auto kind = annotation_kind(in.source)) {
        fs::path csv = *in.annotations;
        if (fs::is_directory(csv)) csv /= "annotations.csv";
        require_input(in.source, csv);
        std::optional<data::SplitAssignment> splits;
        if (in.split_config) splits = data::SplitAssignment::load(require_input(in.source, *in.split_config));
        auto read = data::read_annotations_csv(csv, *kind, splits ? &*splits : nullptr);
        data::BuildResult built;
        switch (in.source) {
            case SourceDataset::SarVqa: built = data::build_action_vqa(std::move(read.annotations), options); break;
            case SourceDataset::Cholect50Phase:
                built = data::build_phase_vqa(std::move(read.annotations), options);
                break;
            case SourceDataset::Cholect50Triplet:
                built = data::build_triplet_vqa(std::move(read.annotations), options);
                break;
            default: built = data::build_tool_vqa(std::move(read.annotations), options); break;
        }
        built.rejections.insert(built.rejections.end(), read.rejections.begin(), read.rejections.end());
        return built;
    }
    data::BuildResult out;
    for (const auto& [split, path] : in.items) {
        const auto raw = data::read_raw_items(require_input(in.source, path));
        switch (in.source) {
            case SourceDataset::SynthSsg: merge(out, data::ingest_synthssg(data::synthssg_items(raw, split))); break;
            case SourceDataset::MedMcqaSurgery:
                merge(out, data::filter_medmcqa_surgery(raw, in.surgery, split));
                break;
            default: merge(out, data::ingest_text_qa(in.source, raw, split)); break;
        }
    }
    return out;
}

std::string rejection_lines(const std::vector<data::Rejection>& rejections) {
    std::string out;
    for (const auto& r : rejections) {
        nlohmann::ordered_json j;
        j["index"] = r.index;
        j["line"] = r.line;
        j["ref"] = r.ref;
        j["reason"] = r.reason;
        j["excluded"] = r.excluded;
        out += j.dump() + "\n";
    }
    return out;
}

std::string flag_lines(const std::vector<data::Flag>& flags) {
    std::string out;
    for (const auto& f : flags) {
        nlohmann::ordered_json j;
        j["record_id"] = f.record_id;
        j["reason"] = f.reason;
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace

bool BuildSummary::clean() const {
    return std::all_of(outputs.begin(), outputs.end(), [](const Output& o) { return o.findings.empty(); });
}

BuildSummary build_datasets(const RunConfig& config, std::optional<SourceDataset> dataset) {
    config.require_seed();
    if (dataset && !config.datasets.count(*dataset)) {
        throw ConfigError(fmt::format("dataset '{}' has no inputs in the config", data::to_string(*dataset)));
    }
    if (config.datasets.empty()) throw ConfigError("the config lists no datasets");

    BuildSummary summary;
    for (const auto& [source, in] : config.datasets) {
        if (dataset && source != *dataset) continue;
        const data::BuildResult built = build_source(in, config.builder);
        const fs::path dir = config.output_dir / std::string(data::to_string(source));
        fs::create_directories(dir);
        data::write_file(dir / "rejections.jsonl", rejection_lines(built.rejections));
        data::write_file(dir / "flags.jsonl", flag_lines(built.flags));

        std::vector<Split> splits;
        if (annotation_kind(source)) {
            splits = {Split::Train, Split::Test};
        } else {
            for (const auto& [split, path] : in.items) splits.push_back(split);
        }
        const std::size_t excluded = built.excluded_count();
        std::size_t total = 0;
        const std::size_t first_output = summary.outputs.size();
        for (Split split : splits) {
            const auto records = data::select_split(built.records, split);
            total += records.size();
            const std::string stem(data::to_string(split));
            const fs::path jsonl = dir / (stem + ".jsonl");
            const fs::path manifest_path = dir / (stem + ".manifest.json");
            data::write_jsonl(jsonl, records);
            auto manifest = data::make_manifest(source, split, records);
            manifest.rejected_count = built.rejections.size() - excluded;
            manifest.excluded_count = excluded;
            if (const auto it = in.reference_counts.find(split); it != in.reference_counts.end()) {
                manifest.reference_count = it->second;
            }
            data::write_file(manifest_path, data::serialize_manifest(manifest));
            if (backs_task(source)) {
                data::write_file(dir / (stem + ".gold.json"), data::select_gold(built.gold, records).dump(2) + "\n");
            }
            BuildSummary::Output o{source, split, manifest, {}};
            o.findings = data::validate_manifest(data::read_jsonl(jsonl), data::load_manifest(manifest_path));
            summary.outputs.push_back(std::move(o));
        }
        if (in.reference_total && *in.reference_total != total && first_output < summary.outputs.size()) {
            summary.outputs[first_output].findings.push_back(
                {data::FindingKind::CountMismatch, "",
                 fmt::format("dataset total is {}, reference total is {}", total, *in.reference_total)});
        }
    }
    return summary;
}

int cmd_build(const RunConfig& config, std::optional<SourceDataset> dataset, std::ostream& out, std::ostream& err) {
    return run_guarded(
        [&] {
            const BuildSummary summary = build_datasets(config, dataset);
            for (const auto& o : summary.outputs) {
                out << fmt::format("{}/{}: {} records, {} rejected, {} excluded\n", data::to_string(o.source),
                                   data::to_string(o.split), o.manifest.record_count, o.manifest.rejected_count,
                                   o.manifest.excluded_count);
                for (const auto& f : o.findings) {
                    err << fmt::format("{}/{}: {}{}: {}\n", data::to_string(o.source), data::to_string(o.split),
                                       data::to_string(f.kind), f.record_id.empty() ? "" : " " + f.record_id,
                                       f.message);
                }
            }
            return summary.clean() ? kExitOk : kExitQuality;
        },
        err);
}

double TrainSummary::reproduction() const {
    return answer_tokens == 0 ? 0.0 : static_cast<double>(reproduced_tokens) / static_cast<double>(answer_tokens);
}

namespace {

core::FirstTurnOrder pick_order(TurnOrderMode mode, std::mt19937_64& rng) {
    switch (mode) {
        case TurnOrderMode::QuestionFirst: return core::FirstTurnOrder::QuestionThenVisual;
        case TurnOrderMode::VisualFirst: return core::FirstTurnOrder::VisualThenQuestion;
        default: return core::draw_first_turn_order(rng);
    }
}

std::vector<core::TrainingExample> training_examples(const RunConfig& config,
                                                     const std::vector<data::VQARecord>& records) {
    const auto& t = config.train;
    std::mt19937_64 rng(config.require_seed());
    std::vector<core::TrainingExample> out;
    for (const auto& r : records) {
        core::TrainingExample ex;
        if (r.image_ref) {
            const fs::path image = t.image_root / *r.image_ref;
            if (!fs::is_regular_file(image)) {
                throw ConfigError(fmt::format("{}: missing image {}", r.id, image.string()));
            }
            ex.visual = adapters::toy_features(t.model, image);
        } else {
            ex.visual.features = core::Matrix(0, t.model.d_v);
        }
        std::vector<core::ConversationTurn> conversation;
        for (std::size_t i = 0; i + 1 < r.turns.size(); i += 2) {
            core::ConversationTurn turn{core::tokenize_bytes(r.turns[i].text, false),
                                        core::tokenize_bytes(r.turns[i + 1].text, true)};
            turn.answer.token_ids.push_back(core::kEndOfAnswer);
            turn.answer.role_mask.push_back(true);
            conversation.push_back(std::move(turn));
        }
        ex.sequence = core::build_instruction_sequence(conversation, ex.visual.features.rows(),
                                                       pick_order(t.first_turn_order, rng));
        out.push_back(std::move(ex));
    }
    return out;
}

/// Greedy decoding of each run of answer positions given everything before it.
std::pair<std::size_t, std::size_t> reproduced(const core::ModelParams& params,
                                               const std::vector<core::TrainingExample>& examples) {
    std::size_t total = 0;
    std::size_t matched = 0;
    for (const auto& ex : examples) {
        const auto visual = core::project_visual(params.projection, ex.visual);
        const auto& seq = ex.sequence;
        std::size_t i = 0;
        while (i < seq.size()) {
            if (!seq.loss_mask[i]) {
                ++i;
                continue;
            }
            std::size_t end = i;
            while (end < seq.size() && seq.loss_mask[end]) ++end;
            core::InstructionSequence prompt;
            prompt.slots.assign(seq.slots.begin(), seq.slots.begin() + static_cast<std::ptrdiff_t>(i));
            prompt.loss_mask.assign(i, false);
            const auto decoded = core::greedy_decode(params, visual, prompt, end - i);
            for (std::size_t k = i; k < end; ++k) {
                const int expected = seq.slots[k].index;
                const std::size_t at = k - i;
                if (expected == core::kEndOfAnswer ? decoded.size() == at
                                                   : at < decoded.size() && decoded[at] == expected) {
                    ++matched;
                }
            }
            total += end - i;
            i = end;
        }
    }
    return {matched, total};
}

std::string format_loss(std::size_t step, double loss) { return fmt::format("{},{:.17g}\n", step, loss); }

/// Keeps the header and the rows up to `step` of an existing loss CSV.
std::string truncate_loss_csv(const fs::path& path, std::size_t step) {
    std::string out = "step,loss\n";
    if (!fs::exists(path)) return out;
    std::istringstream in(data::read_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        if (std::stoull(line.substr(0, comma)) > step) break;
        out += line + "\n";
    }
    return out;
}

}  // namespace

TrainSummary train_toy(const RunConfig& config) {
    const std::uint64_t seed = config.require_seed();
    const auto& t = config.train;
    const fs::path jsonl = config.output_dir / std::string(data::to_string(t.dataset)) /
                           (std::string(data::to_string(t.split)) + ".jsonl");
    if (!fs::is_regular_file(jsonl)) {
        throw ConfigError(fmt::format("training data {} not found; run build first", jsonl.string()));
    }
    const auto records = data::read_jsonl(jsonl);
    if (records.empty()) throw ConfigError(fmt::format("training data {} has no records", jsonl.string()));
    const auto examples = training_examples(config, records);

    core::Checkpoint ckpt;
    core::AdamOptimizer adam;
    if (t.resume && fs::exists(t.checkpoint)) {
        ckpt = core::load_checkpoint(t.checkpoint);
        if (!(ckpt.params.config == t.model)) {
            throw ConfigError(fmt::format("checkpoint {} was trained with a different model config",
                                          t.checkpoint.string()));
        }
        if (ckpt.optimizer != t.optimizer) {
            throw ConfigError(fmt::format("checkpoint {} used optimizer '{}', config says '{}'",
                                          t.checkpoint.string(), ckpt.optimizer, t.optimizer));
        }
        if (t.optimizer == "adam") adam.restore(ckpt.step, ckpt.adam_m, ckpt.adam_v);
    } else {
        ckpt.params = core::init_params(t.model, seed);
        ckpt.optimizer = t.optimizer;
    }

    TrainSummary summary;
    summary.records = records.size();
    summary.start_step = ckpt.step;
    std::string csv = t.resume ? truncate_loss_csv(t.loss_csv, ckpt.step) : "step,loss\n";
    std::optional<double> last_loss;
    fs::create_directories(t.loss_csv.parent_path());

    while (ckpt.step < t.steps) {
        core::StepResult result;
        try {
            result = t.optimizer == "adam" ? adam.step(ckpt.params, examples, t.learning_rate)
                                           : core::training_step(ckpt.params, examples, t.learning_rate);
        } catch (const TrainingError& e) {
            data::write_file(t.loss_csv, csv);
            throw TrainingError(e.tensor(), fmt::format("step {}: {}", ckpt.step + 1, e.what()));
        }
        ckpt.params = std::move(result.params);
        ++ckpt.step;
        csv += format_loss(ckpt.step, result.loss);
        last_loss = result.loss;
        if (t.stop_below && result.loss < *t.stop_below) break;
    }
    if (t.optimizer == "adam") {
        ckpt.adam_m = adam.first_moment();
        ckpt.adam_v = adam.second_moment();
    }
    fs::create_directories(t.checkpoint.parent_path());
    core::save_checkpoint(t.checkpoint, ckpt);
    data::write_file(t.loss_csv, csv);

    summary.final_step = ckpt.step;
    summary.final_loss = last_loss ? *last_loss : core::batch_loss(ckpt.params, examples);
    std::tie(summary.reproduced_tokens, summary.answer_tokens) = reproduced(ckpt.params, examples);
    return summary;
}

int cmd_train_toy(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return run_guarded(
        [&] {
            const TrainSummary s = train_toy(config);
            out << fmt::format("trained {} records, steps {} -> {}, loss {:.6f} nats/token, reproduced {}/{} "
                               "answer tokens\n",
                               s.records, s.start_step, s.final_step, s.final_loss, s.reproduced_tokens,
                               s.answer_tokens);
            return kExitOk;
        },
        err);
}

EvaluateResult evaluate(const RunConfig& config, const std::string& adapter_name,
                        const std::vector<bench::TaskName>& tasks, const adapters::Sleeper& sleep) {
    const auto found = config.adapters.find(adapter_name);
    if (found == config.adapters.end()) {
        std::string known;
        for (const auto& [name, settings] : config.adapters) known += (known.empty() ? "" : ", ") + name;
        throw ConfigError(fmt::format("unknown adapter '{}' (configured: {})", adapter_name,
                                      known.empty() ? "none" : known));
    }
    const AdapterSettings& a = found->second;
    if (tasks.empty()) throw ConfigError("no tasks selected");

    std::vector<bench::BenchmarkTask> loaded;
    for (bench::TaskName task : tasks) {
        const auto [jsonl, gold] = config.task_files(task);
        for (const auto& p : {jsonl, gold}) {
            if (!fs::is_regular_file(p)) {
                throw ConfigError(fmt::format("{}: missing task file {}", bench::to_string(task), p.string()));
            }
        }
        loaded.push_back(bench::load_task(task, jsonl, gold));
    }

    std::unique_ptr<adapters::ModelAdapter> adapter;
    if (a.kind == "oracle") {
        std::vector<data::VQARecord> records;
        for (const auto& t : loaded) records.insert(records.end(), t.records.begin(), t.records.end());
        adapter = std::make_unique<adapters::OracleAdapter>(a.name, records);
    } else if (a.kind == "constant") {
        adapter = std::make_unique<adapters::ConstantAdapter>(a.name, a.text, a.accepts_images);
    } else if (a.kind == "replay") {
        adapter = std::make_unique<adapters::ReplayAdapter>(a.name, a.dir, a.accepts_images);
    } else if (a.kind == "toy") {
        adapter = std::make_unique<adapters::ToyAdapter>(a.name, a.checkpoint, config.bench.image_root);
    } else {
        adapter = std::make_unique<adapters::RemoteAdapter>(a.remote);
    }
    std::unique_ptr<adapters::ModelAdapter> recorder;
    if (a.record_dir) recorder = std::make_unique<adapters::RecordingAdapter>(*adapter, *a.record_dir);

    EvaluateResult result;
    fs::create_directories(config.bench.reports_dir);
    result.report_path = config.bench.reports_dir / (a.name + ".json");
    result.audit_path = config.bench.reports_dir / (a.name + ".audit.jsonl");

    bench::RunConfig rc;
    rc.parallelism = config.bench.parallelism;
    rc.failure_threshold = config.bench.failure_threshold;
    rc.retry = config.bench.retry;
    rc.sleep = sleep;
    rc.system_preamble = config.bench.system_preamble;
    rc.max_tokens = config.bench.max_tokens;
    rc.image_root = config.bench.image_root;
    rc.cache_dir = config.cache_dir;
    rc.audit_path = result.audit_path;
    result.run = bench::run_benchmark(recorder ? *recorder : *adapter, loaded, rc);
    data::write_file(result.report_path, bench::render_report_json(result.run.report));
    return result;
}

int cmd_evaluate(const RunConfig& config, const std::string& adapter_name, const std::vector<bench::TaskName>& tasks,
                 bench::ReportFormat format, std::ostream& out, std::ostream& err) {
    return run_guarded(
        [&] {
            const EvaluateResult r = evaluate(config, adapter_name, tasks);
            out << bench::render_report(r.run.report, format);
            std::size_t failures = 0;
            for (const auto& [task, score] : r.run.report.tasks) failures += score.failures;
            err << fmt::format("report {}, audit {}, {} failed queries\n", r.report_path.string(),
                               r.audit_path.string(), failures);
            return kExitOk;
        },
        err);
}

std::string merge_reports(const std::vector<fs::path>& reports, bench::ReportFormat format) {
    if (reports.empty()) throw ConfigError("report: no report files given");
    std::vector<bench::ScoreReport> parsed;
    for (const auto& p : reports) {
        if (!fs::is_regular_file(p)) throw ConfigError(fmt::format("report: missing file {}", p.string()));
        try {
            parsed.push_back(bench::parse_report_json(data::read_file(p)));
        } catch (const Error& e) {
            throw ValidationError(fmt::format("{}: {}", p.string(), e.what()));
        }
    }
    return bench::render_table(bench::to_table(parsed), format);
}

int cmd_report(const std::vector<fs::path>& reports, bench::ReportFormat format, std::ostream& out,
               std::ostream& err) {
    return run_guarded(
        [&] {
            out << merge_reports(reports, format);
            return kExitOk;
        },
        err);
}

}  // namespace gpvls::cli
