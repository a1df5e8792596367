#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cure/cure.hpp"
#include "cure/http.hpp"
#include "pgm.hpp"

namespace cure::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Logger {
    bool as_json = false;
    std::ostream* err = &std::cerr;
    std::string command;

    void log(std::string_view level, const std::string& msg, json fields = json::object()) const {
        if (as_json) {
            json line{{"level", level}, {"cmd", command}, {"msg", msg}};
            for (auto& [k, v] : fields.items()) line[k] = v;
            *err << line.dump() << '\n';
        } else {
            *err << "cure " << command << ": " << msg;
            for (auto& [k, v] : fields.items()) *err << ' ' << k << '=' << (v.is_string() ? v.get<std::string>() : v.dump());
            *err << '\n';
        }
    }
    void info(const std::string& msg, json fields = json::object()) const { log("info", msg, std::move(fields)); }
    void warn(const std::string& msg, json fields = json::object()) const { log("warn", msg, std::move(fields)); }
    void error(const std::string& msg, json fields = json::object()) const { log("error", msg, std::move(fields)); }
};

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Shared per-invocation state: config document, seed, inputs read, and
/// the effective settings that go into the manifest hash.
struct Context {
    Logger log;
    json config = json::object();
    std::optional<std::uint64_t> seed;
    std::vector<std::string> argv;
    std::vector<fs::path> inputs;
    json effective = json::object();

    json section(const char* name) const { return config.contains(name) ? config[name] : json::object(); }

    std::uint64_t require_seed() const {
        if (!seed) throw UsageError("this subcommand is stochastic; pass --seed or set \"seed\" in --config");
        return *seed;
    }

    fs::path input(const std::string& p) {
        inputs.emplace_back(p);
        return p;
    }

    void write(const fs::path& out, const std::string& content) const {
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        write_atomic(out, content);
        json inputs_json = json::array();
        for (const auto& in : inputs) inputs_json.push_back({{"path", in.string()}, {"sha256", sha256_hex(read_text_file(in))}});
        const json manifest{{"tool", "cure"},
                            {"version", kVersion},
                            {"command", log.command},
                            {"argv", argv},
                            {"seed", seed ? json(*seed) : json(nullptr)},
                            {"config_hash", sha256_hex(effective.dump())},
                            {"effective_config", effective},
                            {"inputs", inputs_json},
                            {"output", {{"path", out.string()}, {"sha256", sha256_hex(content)}}},
                            {"created_at", utc_now()}};
        auto mpath = out;
        mpath += ".manifest.json";
        write_atomic(mpath, manifest.dump(2) + "\n");
        log.info("wrote output", {{"path", out.string()}, {"bytes", content.size()}});
    }
};

ParseMode parse_mode_or(const std::string& s) {
    if (s == "strict") return ParseMode::strict;
    if (s == "lenient") return ParseMode::lenient;
    throw UsageError("parse mode must be strict or lenient, got '" + s + "'");
}

std::vector<Task> tasks_from_flag(const std::string& s) {
    if (s == "all" || s.empty()) return {};
    if (s == "pg") return {Task::PG, Task::DETECTION};
    if (s == "grg") return {Task::GRG};
    if (s == "agrg-locate") return {Task::AGRG_LOCATE};
    if (s == "agrg-describe") return {Task::AGRG_DESCRIBE};
    if (s == "agrg-both") return {Task::AGRG_BOTH};
    if (s == "agrg") return {Task::AGRG_LOCATE, Task::AGRG_DESCRIBE, Task::AGRG_BOTH};
    if (auto t = parse_task(s)) return {*t};
    throw UsageError("unknown task '" + s + "'");
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
    std::string format, in, out, source, fixture, benchmark;
    bool lenient = false;
};

void run_ingest(Context& ctx, const IngestArgs& a) {
    const int modes = !a.format.empty() + !a.fixture.empty() + !a.benchmark.empty();
    if (modes != 1) throw UsageError("ingest needs exactly one of --format, --fixture, --benchmark-subset");
    std::vector<AnnotationRecord> records;
    if (!a.fixture.empty()) {
        const auto spec_json = read_json_file(ctx.input(a.fixture));
        const auto spec = fixture_spec_from_json(spec_json);
        ctx.effective = {{"mode", "fixture"}, {"spec", spec_json}};
        records = make_fixture_dataset(ctx.require_seed(), spec);
    } else if (!a.benchmark.empty()) {
        if (a.in.empty()) throw UsageError("--benchmark-subset needs --in records.jsonl");
        const auto spec_json = read_json_file(ctx.input(a.benchmark));
        const auto pool = read_records_jsonl(ctx.input(a.in));
        ctx.effective = {{"mode", "benchmark-subset"}, {"spec", spec_json}};
        records = build_benchmark_subset(pool, benchmark_spec_from_json(spec_json), ctx.require_seed());
    } else {
        if (a.in.empty()) throw UsageError("--format needs --in");
        const auto fmt = parse_input_format(a.format);
        if (!fmt) throw UsageError("unknown format '" + a.format + "'");
        std::vector<std::string> warnings;
        records = load_records(ctx.input(a.in), *fmt, {a.source, !a.lenient}, &warnings);
        for (const auto& w : warnings) ctx.log.warn("skipped row", {{"reason", w}});
        ctx.effective = {{"mode", "load"}, {"format", a.format}, {"source", a.source}, {"strict", !a.lenient}};
    }
    ctx.log.info("ingested", {{"records", records.size()}});
    ctx.write(a.out, records_to_jsonl(records));
}

// ---------------------------------------------------------------------------
// gen-tasks

struct GenArgs {
    std::string records, out, task = "all";
    bool expand_labels = false;
};

void run_gen_tasks(Context& ctx, const GenArgs& a) {
    auto records = read_records_jsonl(ctx.input(a.records));
    if (a.expand_labels) records = expand_padchest_labels(records);
    const auto keep = tasks_from_flag(a.task);
    std::vector<json> rows;
    for (const auto& r : records) {
        if (!keep.empty() && std::find(keep.begin(), keep.end(), r.task) == keep.end()) continue;
        try {
            rows.push_back(instance_to_json(render_instruction(r)));
        } catch (const MissingField& e) {
            throw Error("record '" + r.key() + "': " + e.what());
        }
    }
    ctx.effective = {{"task", a.task}, {"expand_labels", a.expand_labels}};
    ctx.log.info("rendered", {{"instances", rows.size()}});
    ctx.write(a.out, to_jsonl(rows));
}

// ---------------------------------------------------------------------------
// augment

struct AugArgs {
    std::string in, out, policy;
};

void run_augment(Context& ctx, const AugArgs& a) {
    const json pj = a.policy.empty() ? ctx.section("augment") : read_json_file(ctx.input(a.policy));
    const AugPolicy policy = policy_from_json(pj);
    const auto seed = ctx.require_seed();
    std::vector<json> rows;
    std::size_t fallbacks = 0;
    std::size_t index = 0;
    for_each_jsonl(ctx.input(a.in), [&](std::size_t line, const json& j) {
        InstructionInstance inst;
        try {
            inst = instance_from_json(j);
        } catch (const std::exception& e) {
            throw FormatError(line, e.what());
        }
        const auto res = augment_instance(inst, policy, derive_seed(seed, "augment", index++));
        fallbacks += res.fallback;
        json row = instance_to_json(res.instance);
        row["augmentation"] = draw_to_json(res.draw);
        row["fallback"] = res.fallback;
        rows.push_back(std::move(row));
    });
    ctx.effective = {{"policy", policy_to_json(policy)}};
    ctx.log.info("augmented", {{"instances", rows.size()}, {"fallbacks", fallbacks}});
    ctx.write(a.out, to_jsonl(rows));
}

// ---------------------------------------------------------------------------
// curriculum: plan / sample / simulate

struct CurrArgs {
    std::string pool, metrics, weights, out, learner, learner_url, inter, intra;
    std::optional<double> alpha;
    std::optional<long> warmup, interval, total;
    long n = 1000;
    long timeout_ms = 60000;
};

CurriculumConfig curriculum_config(Context& ctx, const CurrArgs& a) {
    json cj = ctx.section("curriculum");
    if (a.alpha) cj["alpha"] = *a.alpha;
    if (a.warmup) cj["warmup_steps"] = *a.warmup;
    if (a.interval) cj["reweight_interval"] = *a.interval;
    if (a.total) cj["total_steps"] = *a.total;
    if (!a.inter.empty()) cj["inter_strategy"] = a.inter;
    if (!a.intra.empty()) cj["intra_strategy"] = a.intra;
    return config_from_json(cj);
}

std::vector<AnnotationRecord> train_split(const std::vector<AnnotationRecord>& pool) {
    std::vector<AnnotationRecord> out;
    for (const auto& r : pool)
        if (r.split == Split::train) out.push_back(r);
    return out;
}

void run_plan(Context& ctx, const CurrArgs& a) {
    const auto cfg = curriculum_config(ctx, a);
    CurriculumState state;
    if (!a.weights.empty()) {
        state = state_from_json(read_json_file(ctx.input(a.weights)));
    } else if (!a.pool.empty()) {
        const auto train = train_split(read_records_jsonl(ctx.input(a.pool)));
        state = initial_state(index_pool(train).layout);
    } else if (ctx.config.contains("sources")) {
        state = initial_state(layout_from_json(ctx.config["sources"]));
    } else {
        throw UsageError("plan needs --pool, --weights or a \"sources\" layout in --config");
    }
    // Without --metrics only strategies that ignore scores can plan; the
    // curriculum strategy then reports every source as missing.
    std::vector<SourceMetrics> metrics;
    if (!a.metrics.empty()) metrics = metrics_list_from_json(read_json_file(ctx.input(a.metrics)));
    state = advance_stage(cfg, state, metrics);
    ctx.effective = {{"curriculum", config_to_json(cfg)}};
    ctx.log.info("planned", {{"stage", state.stage_index}, {"sources", state.sources.size()}});
    ctx.write(a.out, state_to_json(state).dump(2) + "\n");
}

void run_sample(Context& ctx, const CurrArgs& a) {
    if (a.weights.empty() || a.pool.empty()) throw UsageError("sample needs --weights and --pool");
    if (a.n < 0) throw UsageError("--n must be nonnegative");
    const auto state = state_from_json(read_json_file(ctx.input(a.weights)));
    const auto train = train_split(read_records_jsonl(ctx.input(a.pool)));
    const auto index = index_pool(train);
    if (index.layout.size() != state.sources.size()) throw Error("weights and pool disagree on the number of sources");
    for (std::size_t s = 0; s < state.sources.size(); ++s) {
        const auto& ls = index.layout[s];
        const auto& ss = state.sources[s];
        bool same = ls.id.name == ss.id.name && ls.cells.size() == ss.cells.size();
        for (std::size_t c = 0; same && c < ls.cells.size(); ++c) {
            same = ls.cells[c].categories.size() == ss.cells[c].categories.size();
            for (std::size_t k = 0; same && k < ls.cells[c].categories.size(); ++k) same = ls.cells[c].categories[k].first == ss.cells[c].categories[k];
        }
        if (!same) throw Error("weights do not match the pool layout at source '" + ss.id.name + "'");
    }
    std::mt19937_64 rng(derive_seed(ctx.require_seed(), "sample", static_cast<std::uint64_t>(state.stage_index)));
    std::vector<json> rows;
    rows.reserve(static_cast<std::size_t>(a.n));
    for (long i = 0; i < a.n; ++i) {
        const auto d = draw_sample(state, index, rng);
        json row = record_to_json(train[d.record]);
        row["draw"] = {{"step", i}, {"source", d.source}, {"cell", d.cell}, {"category", d.category}};
        rows.push_back(std::move(row));
    }
    ctx.effective = {{"n", a.n}, {"stage", state.stage_index}};
    ctx.write(a.out, to_jsonl(rows));
}

void run_simulate(Context& ctx, const CurrArgs& a) {
    if (a.pool.empty()) throw UsageError("simulate needs --pool");
    const auto cfg = curriculum_config(ctx, a);
    const auto pool = read_records_jsonl(ctx.input(a.pool));
    const auto seed = ctx.require_seed();
    json result;
    if (!a.learner_url.empty()) {
        HttpLearner learner(a.learner_url, std::chrono::milliseconds(a.timeout_ms));
        result = run_to_json(run_curriculum(cfg, pool, learner, seed));
        ctx.effective = {{"curriculum", config_to_json(cfg)}, {"learner_url", a.learner_url}};
    } else {
        json lj = a.learner.empty() ? ctx.section("learner") : read_json_file(ctx.input(a.learner));
        SimCategoryParams defaults;
        if (lj.contains("default")) {
            defaults.e0 = lj["default"].value("e0", defaults.e0);
            defaults.k = lj["default"].value("k", defaults.k);
            defaults.floor = lj["default"].value("floor", defaults.floor);
        }
        SimulatedLearner learner(defaults);
        if (lj.contains("categories"))
            for (const auto& c : lj["categories"])
                learner.set_params(c.at("source").get<std::string>(), c.at("category").get<std::string>(),
                                   {c.value("e0", defaults.e0), c.value("k", defaults.k), c.value("floor", defaults.floor)});
        result = run_to_json(run_curriculum(cfg, pool, learner, seed));
        json errors = json::object();
        for (const auto& r : pool) errors[r.source_id][r.category] = learner.error(r.source_id, r.category);
        result["final_errors"] = errors;
        ctx.effective = {{"curriculum", config_to_json(cfg)}, {"learner", lj}};
    }
    ctx.write(a.out, result.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string pred, gold, out, task = "all", mode;
};

void run_eval(Context& ctx, const EvalArgs& a) {
    const ParseMode mode = parse_mode_or(a.mode.empty() ? ctx.config.value("parse_mode", std::string("strict")) : a.mode);
    const auto gold = read_records_jsonl(ctx.input(a.gold));
    std::vector<Prediction> preds;
    for_each_jsonl(ctx.input(a.pred), [&](std::size_t line, const json& j) {
        if (!j.is_object() || !j.contains("id") || !j.contains("output") || !j["id"].is_string() || !j["output"].is_string())
            throw FormatError(line, "prediction rows need string fields 'id' and 'output'");
        preds.push_back({j["id"].get<std::string>(), j["output"].get<std::string>()});
    });
    const auto tasks = tasks_from_flag(a.task);
    std::optional<Task> task;
    if (tasks.size() > 1 && tasks.front() != Task::PG) throw UsageError("eval --task takes a single task");
    if (!tasks.empty()) task = tasks.front();
    const auto rep = evaluate_task(preds, gold, task, mode);
    ctx.effective = {{"task", a.task}, {"mode", std::string(to_string(mode))}, {"text_scorer", "lexical_f1"}};
    ctx.log.info("evaluated", {{"n", rep.n}, {"parse_failures", rep.parse_failures}});
    ctx.write(a.out, report_to_json(rep).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// judge

struct JudgeArgs {
    std::string pred, gold, endpoint, model, out, cache_dir, api_key_env, mock_reply;
    int retries = 3;
    long timeout_ms = 30000;
    long backoff_ms = 500;
    int jobs = 1;
    bool no_cache = false;
    bool lenient = false;
};

/// Offline stand-in: answers every request with the same text.
class FixedReplyTransport : public JudgeTransport {
public:
    explicit FixedReplyTransport(std::string reply) : reply_(std::move(reply)) {}
    std::string post(const std::string&, const std::string&, const std::map<std::string, std::string>&, std::chrono::milliseconds) override {
        return reply_;
    }

private:
    std::string reply_;
};

void run_judge(Context& ctx, const JudgeArgs& a) {
    json jc = ctx.section("judge");
    EndpointConfig ec;
    ec.url = a.endpoint.empty() ? jc.value("url", std::string()) : a.endpoint;
    ec.model = a.model.empty() ? jc.value("model", std::string()) : a.model;
    ec.timeout = std::chrono::milliseconds(a.timeout_ms);
    ec.max_retries = a.retries;
    ec.backoff = std::chrono::milliseconds(a.backoff_ms);
    ec.api_key_env = a.api_key_env.empty() ? jc.value("api_key_env", std::string()) : a.api_key_env;
    ec.cache = !a.no_cache;
    if (!a.cache_dir.empty()) ec.cache_dir = a.cache_dir;
    if (a.mock_reply.empty() && ec.url.empty()) throw UsageError("judge needs --endpoint (or --mock-reply)");
    if (a.jobs < 1) throw UsageError("--jobs must be at least 1");

    std::map<std::string, std::string> reports;
    for_each_jsonl(ctx.input(a.gold), [&](std::size_t line, const json& j) {
        if (!j.is_object() || !j.contains("id") || !j.contains("report")) throw FormatError(line, "gold rows need 'id' and 'report'");
        if (!reports.emplace(j["id"].get<std::string>(), j["report"].get<std::string>()).second)
            throw DuplicateId(j["id"].get<std::string>());
    });
    struct Item {
        std::string id, anatomy, prompt;
    };
    std::vector<Item> items;
    for_each_jsonl(ctx.input(a.pred), [&](std::size_t line, const json& j) {
        if (!j.is_object() || !j.contains("id") || !j.contains("anatomy") || !(j.contains("text") || j.contains("output")))
            throw FormatError(line, "prediction rows need 'id', 'anatomy' and 'text'");
        const auto id = j["id"].get<std::string>();
        auto it = reports.find(id);
        if (it == reports.end()) throw UnknownId(id);
        const auto text = j.contains("text") ? j["text"].get<std::string>() : j["output"].get<std::string>();
        items.push_back({id, j["anatomy"].get<std::string>(), build_judge_prompt(text, it->second)});
    });

    std::shared_ptr<JudgeTransport> transport;
    if (!a.mock_reply.empty()) transport = std::make_shared<FixedReplyTransport>(read_text_file(ctx.input(a.mock_reply)));
    else transport = std::make_shared<HttpJudgeTransport>();
    JudgeClient client(ec, transport);

    std::vector<std::string> replies(items.size());
    std::vector<std::exception_ptr> failures(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            try {
                replies[i] = client.call(items[i].prompt);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min<int>(a.jobs, static_cast<int>(items.size())); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);

    std::vector<json> rows;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        json row{{"id", items[i].id}, {"anatomy", items[i].anatomy}, {"request_hash", JudgeClient::request_hash(ec.model, items[i].prompt)},
                 {"raw", replies[i]}};
        try {
            row["verdict"] = verdict_to_json(validate_verdict(replies[i], a.lenient));
            row["error"] = nullptr;
        } catch (const Error& e) {
            ++bad;
            row["verdict"] = nullptr;
            row["error"] = e.what();
        }
        rows.push_back(std::move(row));
    }
    ctx.effective = {{"url", ec.url}, {"model", ec.model}, {"max_retries", ec.max_retries}, {"lenient", a.lenient}, {"mock", !a.mock_reply.empty()}};
    ctx.log.info("judged", {{"rows", rows.size()}, {"verdict_failures", bad}});
    ctx.write(a.out, to_jsonl(rows));
}

struct AggArgs {
    std::string in, out;
    bool lenient = false;
};

void run_judge_aggregate(Context& ctx, const AggArgs& a) {
    std::vector<std::pair<std::string, JudgeVerdict>> rows;
    std::size_t failures = 0;
    for_each_jsonl(ctx.input(a.in), [&](std::size_t line, const json& j) {
        if (!j.is_object() || !j.contains("anatomy") || !j["anatomy"].is_string()) throw FormatError(line, "verdict rows need 'anatomy'");
        std::string raw;
        if (j.contains("verdict") && j["verdict"].is_object()) raw = j["verdict"].dump();
        else if (j.contains("raw") && j["raw"].is_string()) raw = j["raw"].get<std::string>();
        try {
            rows.emplace_back(j["anatomy"].get<std::string>(), validate_verdict(raw, a.lenient));
        } catch (const Error& e) {
            ++failures;
            ctx.log.warn("unusable verdict", {{"line", line}, {"reason", e.what()}});
        }
    });
    const auto table = aggregate_verdicts(rows, failures);
    ctx.effective = {{"lenient", a.lenient}};
    ctx.write(a.out, table_to_json(table).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// preprocess

struct PreArgs {
    std::string in, out;
    bool deterministic = false;
    std::optional<double> clip;
    std::optional<int> grid;
    std::optional<int> resize;
};

void run_preprocess(Context& ctx, const PreArgs& a) {
    const auto img = pgm::read(ctx.input(a.in));
    IntensityGrid out;
    if (a.deterministic) {
        if (a.clip || a.grid || a.resize) throw UsageError("--deterministic fixes clip, grid and size; drop the overrides");
        out = preprocess_deterministic(img);
        ctx.effective = {{"deterministic", true}, {"clip", kEvalClipLimit}, {"grid", {kEvalTileGrid.gx, kEvalTileGrid.gy}}, {"resize", kEvalResize}};
    } else {
        const double clip = a.clip.value_or(kEvalClipLimit);
        const int g = a.grid.value_or(kEvalTileGrid.gx);
        out = clahe(img, clip, {g, g});
        if (a.resize) out = resize_bilinear(out, *a.resize, *a.resize);
        ctx.effective = {{"deterministic", false}, {"clip", clip}, {"grid", {g, g}}, {"resize", a.resize ? json(*a.resize) : json(nullptr)}};
    }
    ctx.write(a.out, pgm::encode(out));
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Curriculum-driven instruction data toolkit for grounded chest X-ray report generation", "cure"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", kVersion);

    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string log_format = "text";
    app.add_option("--seed", seed, "Global seed for stochastic subcommands");
    app.add_option("--config", config_path, "JSON config document (flags override it)");
    app.add_option("--log", log_format, "Log format on stderr")->check(CLI::IsMember({"text", "json"}));

    IngestArgs ing;
    auto* c_ing = app.add_subcommand("ingest", "Load annotations, synthesize fixtures, or draw a stratified benchmark subset");
    c_ing->add_option("--format", ing.format, "scene_graph | phrase_boxes | grounded_report | detection | records");
    c_ing->add_option("--in", ing.in, "Input JSONL");
    c_ing->add_option("--source", ing.source, "Default source_id for rows without one");
    c_ing->add_flag("--lenient", ing.lenient, "Skip malformed rows with a warning instead of failing");
    c_ing->add_option("--fixture", ing.fixture, "Fixture spec JSON");
    c_ing->add_option("--benchmark-subset", ing.benchmark, "Benchmark subset spec JSON");
    c_ing->add_option("--out", ing.out, "Output records JSONL")->required();

    GenArgs gen;
    auto* c_gen = app.add_subcommand("gen-tasks", "Render records into instruction/response triplets");
    c_gen->add_option("--records,--in", gen.records, "Records JSONL")->required();
    c_gen->add_option("--task", gen.task, "pg | grg | agrg-locate | agrg-describe | agrg-both | agrg | all");
    c_gen->add_flag("--expand-labels", gen.expand_labels, "Add (label, boxes) PG pairs for labelled train/val records");
    c_gen->add_option("--out", gen.out, "Output triplets JSONL")->required();

    AugArgs aug;
    auto* c_aug = app.add_subcommand("augment", "Box-aware augmentation of triplets");
    c_aug->add_option("--in,--triplets", aug.in, "Triplets JSONL")->required();
    c_aug->add_option("--policy", aug.policy, "Augmentation policy JSON");
    c_aug->add_option("--out", aug.out, "Output JSONL")->required();

    CurrArgs cur;
    auto add_curr = [&](CLI::App* c) {
        c->add_option("--alpha", cur.alpha, "IoU weight in the aggregate score");
        c->add_option("--warmup", cur.warmup, "Warm-up steps");
        c->add_option("--interval", cur.interval, "Re-weighting interval in steps");
        c->add_option("--total", cur.total, "Total steps");
        c->add_option("--inter", cur.inter, "Inter-source strategy")->check(CLI::IsMember({"natural", "uniform", "curriculum"}));
        c->add_option("--intra", cur.intra, "Intra-source strategy")->check(CLI::IsMember({"natural", "uniform", "curriculum"}));
    };
    auto* c_plan = app.add_subcommand("plan", "Compute the next stage's sampling weights");
    c_plan->add_option("--pool", cur.pool, "Records JSONL defining the sampling tree");
    c_plan->add_option("--weights", cur.weights, "Current weights (default: warm-up state)");
    c_plan->add_option("--metrics", cur.metrics, "Per-source evaluation metrics JSON");
    c_plan->add_option("--out", cur.out, "Output weights JSON")->required();
    add_curr(c_plan);

    auto* c_sample = app.add_subcommand("sample", "Draw training samples from weights");
    c_sample->add_option("--weights", cur.weights, "Weights JSON")->required();
    c_sample->add_option("--pool", cur.pool, "Records JSONL")->required();
    c_sample->add_option("--n", cur.n, "Number of draws");
    c_sample->add_option("--out", cur.out, "Output JSONL")->required();

    auto* c_sim = app.add_subcommand("simulate", "Closed-loop curriculum run against a simulated or remote learner");
    c_sim->add_option("--pool", cur.pool, "Records JSONL")->required();
    c_sim->add_option("--learner", cur.learner, "Simulated learner parameters JSON");
    c_sim->add_option("--learner-url", cur.learner_url, "HTTP learner endpoint");
    c_sim->add_option("--timeout-ms", cur.timeout_ms, "Learner request timeout");
    c_sim->add_option("--out", cur.out, "Output run JSON")->required();
    add_curr(c_sim);

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Score predictions against gold records");
    c_eval->add_option("--pred", ev.pred, "Predictions JSONL {id, output}")->required();
    c_eval->add_option("--gold", ev.gold, "Gold records JSONL")->required();
    c_eval->add_option("--task", ev.task, "Restrict to one task");
    c_eval->add_option("--mode", ev.mode, "strict | lenient");
    c_eval->add_option("--out", ev.out, "Output report JSON")->required();

    JudgeArgs jd;
    auto* c_judge = app.add_subcommand("judge", "LLM-as-judge hallucination verdicts");
    c_judge->add_option("--pred", jd.pred, "Generated mini-reports JSONL {id, anatomy, text}")->required();
    c_judge->add_option("--gold", jd.gold, "Ground-truth reports JSONL {id, report}")->required();
    c_judge->add_option("--endpoint", jd.endpoint, "Judge HTTP endpoint");
    c_judge->add_option("--model", jd.model, "Judge model name");
    c_judge->add_option("--retries", jd.retries, "Retries on transport errors");
    c_judge->add_option("--timeout-ms", jd.timeout_ms, "Per-request timeout");
    c_judge->add_option("--backoff-ms", jd.backoff_ms, "Initial retry backoff");
    c_judge->add_option("--jobs", jd.jobs, "Concurrent requests");
    c_judge->add_option("--cache-dir", jd.cache_dir, "Persistent verdict cache directory");
    c_judge->add_flag("--no-cache", jd.no_cache, "Disable the verdict cache");
    c_judge->add_option("--api-key-env", jd.api_key_env, "Environment variable holding the API key");
    c_judge->add_option("--mock-reply", jd.mock_reply, "Answer every request with this file's contents (offline runs)");
    c_judge->add_flag("--lenient", jd.lenient, "Lowercase enum values before validation");
    c_judge->add_option("--out", jd.out, "Output verdicts JSONL")->required();

    AggArgs ag;
    auto* c_agg = app.add_subcommand("judge-aggregate", "Per-anatomy hallucination table");
    c_agg->add_option("--in", ag.in, "Verdicts JSONL")->required();
    c_agg->add_flag("--lenient", ag.lenient, "Lowercase enum values before validation");
    c_agg->add_option("--out", ag.out, "Output table JSON")->required();

    PreArgs pre;
    auto* c_pre = app.add_subcommand("preprocess", "CLAHE and resize a PGM image");
    c_pre->add_option("--in", pre.in, "Input PGM")->required();
    c_pre->add_option("--out", pre.out, "Output PGM")->required();
    c_pre->add_flag("--deterministic", pre.deterministic, "Evaluation path: clip 3.0, 8x8 tiles, 448x448");
    c_pre->add_option("--clip", pre.clip, "CLAHE clip limit");
    c_pre->add_option("--grid", pre.grid, "CLAHE tiles per side");
    c_pre->add_option("--resize", pre.resize, "Output side length");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    Context ctx;
    ctx.log.as_json = log_format == "json";
    ctx.log.err = &err;
    ctx.argv = args;
    ctx.log.command = app.get_subcommands().front()->get_name();
    try {
        if (!config_path.empty()) {
            ctx.config = read_json_file(ctx.input(config_path));
            if (!ctx.config.is_object() || !ctx.config.contains("version")) throw Error("config must be a JSON object with a \"version\" field");
            if (ctx.config["version"] != 1) throw Error("unsupported config version " + ctx.config["version"].dump());
        }
        ctx.seed = seed;
        if (!ctx.seed && ctx.config.contains("seed")) ctx.seed = ctx.config["seed"].get<std::uint64_t>();

        const auto& cmd = ctx.log.command;
        if (cmd == "ingest") run_ingest(ctx, ing);
        else if (cmd == "gen-tasks") run_gen_tasks(ctx, gen);
        else if (cmd == "augment") run_augment(ctx, aug);
        else if (cmd == "plan") run_plan(ctx, cur);
        else if (cmd == "sample") run_sample(ctx, cur);
        else if (cmd == "simulate") run_simulate(ctx, cur);
        else if (cmd == "eval") run_eval(ctx, ev);
        else if (cmd == "judge") run_judge(ctx, jd);
        else if (cmd == "judge-aggregate") run_judge_aggregate(ctx, ag);
        else if (cmd == "preprocess") run_preprocess(ctx, pre);
        return kExitOk;
    } catch (const UsageError& e) {
        ctx.log.error(e.what());
        err << app.get_subcommands().front()->help();
        return kExitUsage;
    } catch (const Error& e) {
        ctx.log.error(e.what(), {{"error", "domain"}});
        return kExitDomain;
    } catch (const json::exception& e) {
        ctx.log.error(std::string("invalid JSON document: ") + e.what(), {{"error", "domain"}});
        return kExitDomain;
    } catch (const fs::filesystem_error& e) {
        ctx.log.error(e.what(), {{"error", "io"}});
        return kExitDomain;
    }
}

}  // namespace cure::cli
