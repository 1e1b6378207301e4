#include "gpvls/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

#include <fmt/core.h>

#include "gpvls/errors.hpp"
#include "gpvls/util/hash.hpp"

namespace gpvls::cli {

using nlohmann::json;

namespace {

class Section {
public:
    Section(const json& value, std::string where, std::initializer_list<std::string_view> allowed)
        : value_(value), where_(std::move(where)) {
        if (!value_.is_object()) fail("expected an object");
        for (const auto& item : value_.items()) {
            if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
                fail(fmt::format("unknown key '{}'", item.key()));
            }
        }
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw ConfigError(fmt::format("config {}: {}", where_.empty() ? "<root>" : where_, message));
    }

    bool has(const char* key) const { return value_.contains(key) && !value_.at(key).is_null(); }
    std::string at(const char* key) const { return where_.empty() ? key : where_ + "." + key; }
    const json& raw(const char* key) const { return value_.at(key); }

    Section section(const char* key, std::initializer_list<std::string_view> allowed) const {
        return Section(value_.at(key), at(key), allowed);
    }

    std::string string(const char* key, std::string fallback = {}) const {
        if (!has(key)) return fallback;
        if (!raw(key).is_string()) Section::type_error(at(key), "a string");
        return raw(key).get<std::string>();
    }

    std::uint64_t unsigned_int(const char* key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            type_error(at(key), "a non-negative integer");
        }
        return raw(key).get<std::uint64_t>();
    }

    double number(const char* key, double fallback) const {
        if (!has(key)) return fallback;
        if (!raw(key).is_number()) type_error(at(key), "a number");
        return raw(key).get<double>();
    }

    bool boolean(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        if (!raw(key).is_boolean()) type_error(at(key), "true or false");
        return raw(key).get<bool>();
    }

    std::vector<std::string> strings(const char* key) const {
        std::vector<std::string> out;
        if (!has(key)) return out;
        if (!raw(key).is_array()) type_error(at(key), "an array of strings");
        for (const auto& v : raw(key)) {
            if (!v.is_string()) type_error(at(key), "an array of strings");
            out.push_back(v.get<std::string>());
        }
        return out;
    }

    const json& value() const { return value_; }
    const std::string& where() const { return where_; }

    [[noreturn]] static void type_error(const std::string& where, const char* expected) {
        throw ConfigError(fmt::format("config {}: expected {}", where, expected));
    }

private:
    const json& value_;
    std::string where_;
};

struct Paths {
    fs::path base;
    fs::path output;
};

constexpr std::string_view kOutputPrefix = "{output_dir}";

fs::path resolve(const Paths& base, const std::string& p) {
    if (p.rfind(kOutputPrefix, 0) == 0) {
        return (base.output / fs::path(p.substr(kOutputPrefix.size())).relative_path()).lexically_normal();
    }
    const fs::path path(p);
    return (path.is_absolute() ? path : base.base / path).lexically_normal();
}

template <typename F>
auto guard(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(fmt::format("config {}: {}", where, e.what()));
    }
}

std::size_t to_size(const Section& s, const char* key, std::size_t fallback) {
    const auto v = s.unsigned_int(key, fallback);
    if (v > std::numeric_limits<std::size_t>::max()) s.fail(fmt::format("{} is too large", key));
    return static_cast<std::size_t>(v);
}

std::map<data::Split, fs::path> split_paths(const Section& s, const Paths& base) {
    std::map<data::Split, fs::path> out;
    for (const auto& [name, value] : s.value().items()) {
        const auto split = guard(s.at(name.c_str()), [&] { return data::parse_split(name); });
        if (!value.is_string()) Section::type_error(s.at(name.c_str()), "a path");
        out[split] = resolve(base, value.get<std::string>());
    }
    return out;
}

bool frame_source(data::SourceDataset source) {
    using data::SourceDataset;
    return source == SourceDataset::SarVqa || source == SourceDataset::Cholect50Phase ||
           source == SourceDataset::Cholect50Triplet || source == SourceDataset::SurgToolLoc;
}

DatasetInputs parse_dataset(const Section& s, data::SourceDataset source, const Paths& base) {
    DatasetInputs d;
    d.source = source;
    if (frame_source(source)) {
        Section in(s.value(), s.where(), {"annotations", "split_config", "reference_counts", "reference_total"});
        if (!in.has("annotations")) in.fail("missing 'annotations'");
        d.annotations = resolve(base, in.string("annotations"));
        if (in.has("split_config")) d.split_config = resolve(base, in.string("split_config"));
    } else {
        Section in(s.value(), s.where(),
                   {"inputs", "reference_counts", "reference_total", "subjects", "topic_keywords"});
        if (!in.has("inputs")) in.fail("missing 'inputs'");
        d.items = split_paths(in.section("inputs", {"train", "test"}), base);
        if (source == data::SourceDataset::MedMcqaSurgery) {
            if (in.has("subjects")) {
                const auto subjects = in.strings("subjects");
                d.surgery.subjects = {subjects.begin(), subjects.end()};
            }
            d.surgery.topic_keywords = in.strings("topic_keywords");
        } else if (in.has("subjects") || in.has("topic_keywords")) {
            in.fail("'subjects' and 'topic_keywords' apply to medmcqa_surgery only");
        }
    }
    if (s.has("reference_counts")) {
        const auto counts = s.section("reference_counts", {"train", "test"});
        for (const char* key : {"train", "test"}) {
            if (counts.has(key)) d.reference_counts[data::parse_split(key)] = to_size(counts, key, 0);
        }
    }
    if (s.has("reference_total")) d.reference_total = to_size(s, "reference_total", 0);
    return d;
}

core::ModelConfig parse_model(const Section& s) {
    core::ModelConfig m;
    m.patch_size = to_size(s, "patch_size", m.patch_size);
    m.channels = to_size(s, "channels", m.channels);
    m.d_v = to_size(s, "d_v", m.d_v);
    m.d_t = to_size(s, "d_t", m.d_t);
    m.vocab_size = to_size(s, "vocab_size", m.vocab_size);
    m.n_heads = to_size(s, "n_heads", m.n_heads);
    m.d_ff = to_size(s, "d_ff", m.d_ff);
    m.encoder_seed = s.unsigned_int("encoder_seed", m.encoder_seed);
    guard(s.where(), [&] {
        m.validate();
        return 0;
    });
    if (m.vocab_size < 256) s.fail("vocab_size must cover the byte tokenizer (256)");
    return m;
}

TrainSettings parse_train(const Section& s, const Paths& base, const fs::path& output_dir) {
    TrainSettings t;
    t.checkpoint = output_dir / "toy" / "checkpoint.bin";
    t.loss_csv = output_dir / "toy" / "loss.csv";
    const Section& in = s;
    if (in.has("dataset")) {
        t.dataset = guard(in.at("dataset"), [&] { return data::parse_source(in.string("dataset")); });
    }
    if (in.has("split")) t.split = guard(in.at("split"), [&] { return data::parse_split(in.string("split")); });
    if (in.has("image_root")) t.image_root = resolve(base, in.string("image_root"));
    t.steps = to_size(in, "steps", t.steps);
    t.learning_rate = in.number("learning_rate", t.learning_rate);
    if (!(t.learning_rate >= 0.0) || !std::isfinite(t.learning_rate)) in.fail("learning_rate must be finite and >= 0");
    t.optimizer = in.string("optimizer", t.optimizer);
    if (t.optimizer != "adam" && t.optimizer != "sgd") in.fail("optimizer must be 'adam' or 'sgd'");
    const std::string order = in.string("first_turn_order", "random");
    if (order == "random") {
        t.first_turn_order = TurnOrderMode::Random;
    } else if (order == "question_first") {
        t.first_turn_order = TurnOrderMode::QuestionFirst;
    } else if (order == "visual_first") {
        t.first_turn_order = TurnOrderMode::VisualFirst;
    } else {
        in.fail("first_turn_order must be random, question_first or visual_first");
    }
    if (in.has("stop_below")) t.stop_below = in.number("stop_below", 0.0);
    if (in.has("model")) {
        t.model = parse_model(in.section(
            "model", {"patch_size", "channels", "d_v", "d_t", "vocab_size", "n_heads", "d_ff", "encoder_seed"}));
    }
    if (in.has("checkpoint")) t.checkpoint = resolve(base, in.string("checkpoint"));
    if (in.has("loss_csv")) t.loss_csv = resolve(base, in.string("loss_csv"));
    t.resume = in.boolean("resume", false);
    return t;
}

BenchSettings parse_bench(const Section* s, const Paths& base, const fs::path& output_dir) {
    BenchSettings b;
    b.reports_dir = output_dir / "reports";
    if (s == nullptr) return b;
    Section in(s->value(), s->where(),
               {"tasks", "tasks_dir", "image_root", "parallelism", "failure_threshold", "system_preamble",
                "max_tokens", "retry", "reports_dir"});
    if (in.has("tasks")) {
        b.tasks.clear();
        for (const auto& name : in.strings("tasks")) {
            b.tasks.push_back(guard(in.at("tasks"), [&] { return bench::parse_task(name); }));
        }
    }
    if (in.has("tasks_dir")) b.tasks_dir = resolve(base, in.string("tasks_dir"));
    if (in.has("image_root")) b.image_root = resolve(base, in.string("image_root"));
    b.parallelism = to_size(in, "parallelism", b.parallelism);
    if (b.parallelism == 0) in.fail("parallelism must be at least 1");
    b.failure_threshold = in.number("failure_threshold", b.failure_threshold);
    if (!(b.failure_threshold >= 0.0 && b.failure_threshold <= 1.0)) in.fail("failure_threshold must be in [0, 1]");
    b.system_preamble = in.string("system_preamble", b.system_preamble);
    b.max_tokens = static_cast<int>(to_size(in, "max_tokens", static_cast<std::size_t>(b.max_tokens)));
    if (b.max_tokens <= 0) in.fail("max_tokens must be positive");
    if (in.has("retry")) {
        const auto r = in.section("retry", {"max_attempts", "initial_backoff_ms", "multiplier"});
        b.retry.max_attempts = static_cast<int>(to_size(r, "max_attempts", 3));
        if (b.retry.max_attempts < 1) r.fail("max_attempts must be at least 1");
        b.retry.initial_backoff = std::chrono::milliseconds(to_size(r, "initial_backoff_ms", 200));
        b.retry.multiplier = r.number("multiplier", 2.0);
        if (!(b.retry.multiplier >= 1.0)) r.fail("multiplier must be >= 1");
    }
    if (in.has("reports_dir")) b.reports_dir = resolve(base, in.string("reports_dir"));
    return b;
}

AdapterSettings parse_adapter(const std::string& name, const Section& s, const Paths& base,
                              const fs::path& image_root) {
    AdapterSettings a;
    a.name = name;
    if (!s.value().is_object() || !s.value().contains("kind") || !s.value().at("kind").is_string()) {
        throw ConfigError(fmt::format("config {}: missing 'kind'", s.where()));
    }
    a.kind = s.value().at("kind").get<std::string>();
    if (a.kind == "oracle") {
        Section in(s.value(), s.where(), {"kind"});
    } else if (a.kind == "constant") {
        Section in(s.value(), s.where(), {"kind", "text", "accepts_images"});
        a.text = in.string("text");
        a.accepts_images = in.boolean("accepts_images", true);
    } else if (a.kind == "replay") {
        Section in(s.value(), s.where(), {"kind", "dir", "accepts_images"});
        if (!in.has("dir")) in.fail("missing 'dir'");
        a.dir = resolve(base, in.string("dir"));
        a.accepts_images = in.boolean("accepts_images", true);
    } else if (a.kind == "toy") {
        Section in(s.value(), s.where(), {"kind", "checkpoint", "record_dir"});
        if (!in.has("checkpoint")) in.fail("missing 'checkpoint'");
        a.checkpoint = resolve(base, in.string("checkpoint"));
        if (in.has("record_dir")) a.record_dir = resolve(base, in.string("record_dir"));
    } else if (a.kind == "remote") {
        Section in(s.value(), s.where(),
                   {"kind", "base_url", "path", "model", "api_key_env", "timeout_ms", "max_image_bytes",
                    "accepts_images", "record_dir"});
        if (!in.has("base_url")) in.fail("missing 'base_url'");
        if (!in.has("model")) in.fail("missing 'model'");
        a.remote.name = name;
        a.remote.base_url = in.string("base_url");
        a.remote.path = in.string("path", a.remote.path);
        a.remote.model = in.string("model");
        a.remote.api_key_env = in.string("api_key_env");
        a.remote.timeout_ms = static_cast<int>(to_size(in, "timeout_ms", 30000));
        a.remote.max_image_bytes = to_size(in, "max_image_bytes", a.remote.max_image_bytes);
        a.remote.accepts_images = in.boolean("accepts_images", true);
        a.remote.image_root = image_root;
        a.accepts_images = a.remote.accepts_images;
        if (in.has("record_dir")) a.record_dir = resolve(base, in.string("record_dir"));
    } else {
        throw ConfigError(fmt::format("config {}: unknown adapter kind '{}'", s.where(), a.kind));
    }
    return a;
}

}  // namespace

std::uint64_t RunConfig::require_seed() const {
    if (!seed) throw ConfigError("config: 'seed' is required for this command (set it in the config or pass --seed)");
    return *seed;
}

std::pair<fs::path, fs::path> RunConfig::task_files(bench::TaskName task) const {
    const fs::path dir = bench.tasks_dir ? *bench.tasks_dir / std::string(bench::to_string(task))
                                         : output_dir / std::string(data::to_string(bench::task_source(task)));
    return {dir / "test.jsonl", dir / "test.gold.json"};
}

RunConfig parse_config(const json& input, const fs::path& base_dir, const Overrides& overrides) {
    json doc = input;
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    if (overrides.seed) doc["seed"] = *overrides.seed;
    if (overrides.output_dir) doc["output_dir"] = overrides.output_dir->string();

    Section root(doc, "",
                 {"seed", "output_dir", "cache_dir", "builder", "datasets", "train", "bench", "adapters"});
    RunConfig c;
    if (root.has("seed")) c.seed = root.unsigned_int("seed", 0);
    c.output_dir = overrides.output_dir ? fs::absolute(*overrides.output_dir).lexically_normal()
                                        : resolve(Paths{base_dir, {}}, root.string("output_dir", "out"));
    const Paths paths{base_dir, c.output_dir};
    if (root.has("cache_dir")) c.cache_dir = resolve(paths, root.string("cache_dir"));

    if (root.has("builder")) {
        const auto b = root.section("builder", {"empty_labels", "image_pattern"});
        const std::string policy = b.string("empty_labels", "reject");
        if (policy == "reject") {
            c.builder.empty_labels = data::EmptyLabelPolicy::Reject;
        } else if (policy == "answer_none") {
            c.builder.empty_labels = data::EmptyLabelPolicy::AnswerNone;
        } else {
            b.fail("empty_labels must be 'reject' or 'answer_none'");
        }
        c.builder.image_pattern = b.string("image_pattern", c.builder.image_pattern);
    }

    if (root.has("datasets")) {
        if (!root.raw("datasets").is_object()) Section::type_error("datasets", "an object");
        for (const auto& [name, value] : root.raw("datasets").items()) {
            const std::string where = "datasets." + name;
            const auto source = guard(where, [&] { return data::parse_source(name); });
            if (source == data::SourceDataset::MedMcqa) {
                throw ConfigError(fmt::format("config {}: use medmcqa_surgery for the MedMCQA input", where));
            }
            const Section s(value, where, {"annotations", "split_config", "inputs", "reference_counts",
                                           "reference_total", "subjects", "topic_keywords"});
            c.datasets[source] = parse_dataset(s, source, paths);
        }
    }

    c.train = parse_train(Section(root.has("train") ? root.raw("train") : json::object(), "train",
                                  {"dataset", "split", "image_root", "steps", "learning_rate", "optimizer",
                                   "first_turn_order", "stop_below", "model", "checkpoint", "loss_csv", "resume"}),
                          paths, c.output_dir);

    if (root.has("bench")) {
        const Section s(root.raw("bench"), "bench",
                        {"tasks", "tasks_dir", "image_root", "parallelism", "failure_threshold",
                         "system_preamble", "max_tokens", "retry", "reports_dir"});
        c.bench = parse_bench(&s, paths, c.output_dir);
    } else {
        c.bench = parse_bench(nullptr, paths, c.output_dir);
    }

    if (root.has("adapters")) {
        if (!root.raw("adapters").is_object()) Section::type_error("adapters", "an object");
        for (const auto& [name, value] : root.raw("adapters").items()) {
            if (!value.is_object()) Section::type_error("adapters." + name, "an object");
            c.adapters[name] = parse_adapter(name, Section(value, "adapters." + name,
                                                           {"kind", "text", "dir", "checkpoint", "accepts_images",
                                                            "record_dir", "base_url", "path", "model",
                                                            "api_key_env", "timeout_ms", "max_image_bytes"}),
                                             paths, c.bench.image_root);
        }
    }

    c.hash = util::sha256_hex(doc.dump());
    return c;
}

RunConfig load_config(const fs::path& path, const Overrides& overrides) {
    std::string text;
    try {
        text = data::read_file(path);
    } catch (const Error&) {
        throw ConfigError(fmt::format("config: cannot read {}", path.string()));
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config {}: invalid JSON: {}", path.string(), e.what()));
    }
    return parse_config(doc, fs::absolute(path).parent_path(), overrides);
}

}  // namespace gpvls::cli
