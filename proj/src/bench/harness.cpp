#include "gpvls/bench/harness.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/core.h>

#include "gpvls/errors.hpp"
#include "gpvls/util/hash.hpp"
#include "json.hpp"

namespace gpvls::bench {

using nlohmann::ordered_json;

BenchmarkTask make_task(TaskName name, std::vector<data::VQARecord> records, const ordered_json& gold) {
    BenchmarkTask task{name, std::move(records), {}};
    for (const auto& r : task.records) {
        if (!gold.contains(r.id)) throw ConfigError(fmt::format("no gold label for {}", r.id));
        task.gold.push_back(gold_from_json(name, gold.at(r.id)));
    }
    return task;
}

BenchmarkTask load_task(TaskName name, const std::filesystem::path& jsonl, const std::filesystem::path& gold) {
    ordered_json g;
    try {
        g = ordered_json::parse(data::read_file(gold));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", gold.string(), e.what()));
    }
    return make_task(name, data::read_jsonl(jsonl), g);
}

double TaskScore::accuracy() const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

void accumulate(TaskScore& score, const ScoreOutcome& outcome, bool failed) {
    ++score.total;
    if (outcome.correct) ++score.correct;
    if (failed) ++score.failures;
    if (outcome.detail) {
        if (!score.set) score.set = SetDetail{};
        score.set->true_positives += outcome.detail->true_positives;
        score.set->predicted += outcome.detail->predicted;
        score.set->gold += outcome.detail->gold;
    }
}

namespace {

std::string prompt_hash(const adapters::Query& q) {
    ordered_json j = {q.system, q.prompt, q.image_ref ? ordered_json(*q.image_ref) : ordered_json(nullptr), q.max_tokens};
    return util::sha256_hex(j.dump());
}

std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& model, const std::string& record_id,
                                 const adapters::Query& q) {
    const std::string key = util::sha256_hex(ordered_json{model, record_id, prompt_hash(q)}.dump());
    return dir / (key + ".json");
}

struct Job {
    std::size_t task;
    std::size_t record;
};

}  // namespace

std::string serialize_audit(const std::vector<AuditEntry>& audit) {
    std::string out;
    for (const auto& a : audit) {
        ordered_json j;
        j["record_id"] = a.record_id;
        j["task"] = to_string(a.task);
        j["prompt"] = a.prompt;
        j["response"] = a.response;
        j["extracted"] = a.extracted;
        j["correct"] = a.correct;
        j["cached"] = a.cached;
        j["error"] = a.error.empty() ? ordered_json(nullptr) : ordered_json(a.error);
        out += j.dump() + "\n";
    }
    return out;
}

RunResult run_benchmark(adapters::ModelAdapter& adapter, const std::vector<BenchmarkTask>& tasks,
                        const RunConfig& config) {
    const adapters::Health health = adapter.probe();
    if (!health.ok) throw ConfigError(fmt::format("adapter {} is unhealthy: {}", adapter.name(), health.detail));
    std::vector<Job> jobs;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& task = tasks[t];
        if (task.records.size() != task.gold.size()) {
            throw ConfigError(fmt::format("task {}: {} records but {} gold labels", to_string(task.name),
                                          task.records.size(), task.gold.size()));
        }
        if (is_vision_task(task.name)) {
            if (!adapter.accepts_images()) {
                throw ConfigError(fmt::format("adapter {} does not accept images; cannot run {}", adapter.name(),
                                              to_string(task.name)));
            }
            for (const auto& r : task.records) {
                if (!r.image_ref || !std::filesystem::exists(config.image_root / *r.image_ref)) {
                    throw ConfigError(fmt::format("{}: image {} not found under {}", r.id, r.image_ref.value_or("<none>"),
                                                  config.image_root.string()));
                }
            }
        }
        for (std::size_t i = 0; i < task.records.size(); ++i) jobs.push_back({t, i});
    }

    std::vector<AuditEntry> audit(jobs.size());
    std::vector<ScoreOutcome> outcomes(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    const std::string model = adapter.name();

    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
            {
                std::lock_guard lock(fatal_mutex);
                if (fatal) return;
            }
            const auto& task = tasks[jobs[j].task];
            const auto& record = task.records[jobs[j].record];
            adapters::Query q;
            q.system = config.system_preamble;
            q.prompt = record.question();
            q.image_ref = is_vision_task(task.name) ? record.image_ref : std::nullopt;
            q.max_tokens = config.max_tokens;
            q.temperature = 0.0;
            AuditEntry& entry = audit[j];
            entry.record_id = record.id;
            entry.task = task.name;
            entry.prompt = q.prompt;
            try {
                std::optional<std::string> text;
                std::filesystem::path cached;
                if (config.cache_dir) {
                    cached = cache_path(*config.cache_dir, model, record.id, q);
                    if (std::filesystem::exists(cached)) {
                        text = nlohmann::json::parse(data::read_file(cached)).at("text").get<std::string>();
                        entry.cached = true;
                    }
                }
                if (!text) {
                    text = adapters::query_with_retry(adapter, q, config.retry, config.sleep).text;
                    if (config.cache_dir) {
                        ordered_json c;
                        c["model"] = model;
                        c["record_id"] = record.id;
                        c["prompt_hash"] = prompt_hash(q);
                        c["text"] = *text;
                        data::write_file(cached, c.dump(2) + "\n");
                    }
                }
                entry.response = *text;
                outcomes[j] = score_record(task.name, *text, task.gold[jobs[j].record]);
            } catch (const adapters::ReplayMissError&) {
                std::lock_guard lock(fatal_mutex);
                if (!fatal) fatal = std::current_exception();
                return;
            } catch (const adapters::AdapterError& e) {
                entry.error = fmt::format("{}: {}", adapters::to_string(e.kind()), e.what());
                outcomes[j] = score_record(task.name, "", task.gold[jobs[j].record]);
                outcomes[j].correct = false;
            } catch (const ConfigError&) {
                std::lock_guard lock(fatal_mutex);
                if (!fatal) fatal = std::current_exception();
                return;
            }
            outcomes[j].record_id = record.id;
            entry.extracted = outcomes[j].extracted;
            entry.correct = outcomes[j].correct;
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(config.parallelism, jobs.size()));
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    RunResult result;
    result.report.model = model;
    std::size_t failures = 0;
    for (const auto& task : tasks) result.report.tasks[task.name];
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const bool failed = !audit[j].error.empty();
        failures += failed ? 1 : 0;
        accumulate(result.report.tasks[tasks[jobs[j].task].name], outcomes[j], failed);
    }
    result.audit = std::move(audit);
    if (config.audit_path) data::write_file(*config.audit_path, serialize_audit(result.audit));
    if (!jobs.empty()) {
        const double rate = static_cast<double>(failures) / static_cast<double>(jobs.size());
        if (rate > config.failure_threshold) {
            throw RunQualityError(fmt::format("{} of {} queries failed ({:.1f}% > {:.1f}% threshold)", failures,
                                              jobs.size(), 100.0 * rate, 100.0 * config.failure_threshold));
        }
    }
    return result;
}

}  // namespace gpvls::bench
