#include "codeforge/orchestrator.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "codeforge/parallel.hpp"

namespace codeforge {

namespace fs = std::filesystem;

namespace {

// Reads a JSON object section, rejecting keys outside `allowed`.
const json& section(const json& parent, const char* key, const std::set<std::string>& allowed) {
    static const json empty = json::object();
    const auto it = parent.find(key);
    if (it == parent.end()) return empty;
    if (!it->is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
    for (const auto& [k, _] : it->items()) {
        if (!allowed.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in config section '" + key + "'");
    }
    return *it;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

bool is_non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!is_non_negative_integer(*it)) throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
    return it->get<std::size_t>();
}

std::uint64_t get_seed(const json& j, const char* key, std::uint64_t fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!is_non_negative_integer(*it)) throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
    return it->get<std::uint64_t>();
}

json error_classes_json(const std::set<ErrorClass>& classes) {
    json out = json::array();
    for (ErrorClass c : classes) {
        if (c != ErrorClass::None) out.push_back(to_string(c));
    }
    return out;
}

std::string jsonl_text(const std::vector<json>& rows) {
    std::string text;
    for (const json& row : rows) {
        text += dump_line(row);
        text += '\n';
    }
    return text;
}

std::string corpus_text(const std::vector<RawRecord>& records) {
    std::string text;
    for (const RawRecord& r : records) {
        text += format_corpus_line(r);
        text += '\n';
    }
    return text;
}

template <class Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

std::set<ErrorClass> parse_error_classes(std::string_view text) {
    std::set<ErrorClass> out{ErrorClass::None};
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string_view item = text.substr(start, comma == std::string_view::npos ? comma : comma - start);
        if (!item.empty()) out.insert(error_class_from_string(item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (out.count(ErrorClass::Unsupported)) throw ConfigError("unsupported errors cannot be allowed");
    return out;
}

Clock make_clock(std::string_view setting) {
    if (setting == "system") return system_clock();
    try {
        return fixed_clock(parse_timestamp(setting));
    } catch (const std::exception&) {
        throw ConfigError("clock must be \"system\" or a UTC timestamp like 2025-01-01T00:00:00Z");
    }
}

void PipelineConfig::validate() const {
    if (corpus_paths.empty()) throw ConfigError("at least one corpus path is required");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
    curation.validate();
    augmentation.validate();
    mix.validate();
    reward.validate();
    limits.validate();
    if (interpreter.command.empty()) throw ConfigError("interpreter command is empty");
    make_clock(clock);
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> top{"corpus",       "output_dir", "seed",    "filter", "curation",
                                           "augmentation", "tasks",      "reward",  "sandbox", "threads"};
    for (const auto& [k, _] : j.items()) {
        if (!top.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    auto resolve = [&](const std::string& p) { return base_dir.empty() ? fs::path(p) : base_dir / p; };

    PipelineConfig c;
    const auto corpus = j.find("corpus");
    if (corpus == j.end()) throw ConfigError("config needs a 'corpus' entry");
    if (corpus->is_string()) {
        c.corpus_paths.push_back(resolve(corpus->get<std::string>()));
    } else if (corpus->is_array()) {
        for (const json& p : *corpus) {
            if (!p.is_string()) throw ConfigError("corpus entries must be paths");
            c.corpus_paths.push_back(resolve(p.get<std::string>()));
        }
    } else {
        throw ConfigError("'corpus' must be a path or a list of paths");
    }
    c.output_dir = resolve(get_or<std::string>(j, "output_dir", c.output_dir.string()));
    c.seed = get_seed(j, "seed", c.seed);
    c.threads = get_count(j, "threads", c.threads);

    const json& f = section(j, "filter", {"min_lines", "min_chars", "visualization_modules"});
    c.filter.min_lines = get_count(f, "min_lines", c.filter.min_lines);
    c.filter.min_chars = get_count(f, "min_chars", c.filter.min_chars);
    if (f.contains("visualization_modules")) {
        c.filter.visualization_modules = get_or<std::set<std::string>>(f, "visualization_modules", {});
    }

    const json& cu = section(j, "curation", {"gamma", "subset_cap", "iterations", "seed"});
    c.curation.gamma = get_or<double>(cu, "gamma", c.curation.gamma);
    c.curation.subset_cap = get_count(cu, "subset_cap", c.curation.subset_cap);
    c.curation.iterations = get_count(cu, "iterations", c.curation.iterations);
    c.curation.rng_seed = get_seed(cu, "seed", c.seed);

    const json& a = section(j, "augmentation",
                            {"digit", "logical", "digit_prob", "max_logical_edits", "errors", "syntax_break_prob", "seed"});
    c.augmentation.digit_enabled = get_or<bool>(a, "digit", c.augmentation.digit_enabled);
    c.augmentation.logical_enabled = get_or<bool>(a, "logical", c.augmentation.logical_enabled);
    c.augmentation.digit_prob = get_or<double>(a, "digit_prob", c.augmentation.digit_prob);
    c.augmentation.max_logical_edits = get_count(a, "max_logical_edits", c.augmentation.max_logical_edits);
    c.augmentation.syntax_break_prob = get_or<double>(a, "syntax_break_prob", c.augmentation.syntax_break_prob);
    if (a.contains("errors")) {
        std::string joined;
        for (const std::string& name : get_or<std::vector<std::string>>(a, "errors", {})) joined += name + ",";
        c.augmentation.allowed_error_classes = parse_error_classes(joined);
    }
    c.augmentation.rng_seed = get_seed(a, "seed", c.seed);

    const json& t = section(j, "tasks", {"mix", "seed"});
    if (t.contains("mix")) {
        const json& m = t.at("mix");
        if (m.is_string()) {
            c.mix = TaskMix::parse(m.get<std::string>());
        } else if (m.is_object()) {
            const json& mo = section(t, "mix", {"forward", "backward"});
            c.mix = TaskMix{get_or<double>(mo, "forward", 0.0), get_or<double>(mo, "backward", 0.0)};
        } else {
            throw ConfigError("'tasks.mix' must be an object or a string");
        }
    }
    c.task_seed = get_seed(t, "seed", c.seed);

    const json& r = section(j, "reward", {"w", "beta"});
    c.reward.w = get_or<double>(r, "w", c.reward.w);
    c.reward.beta = get_or<double>(r, "beta", c.reward.beta);

    const json& s = section(j, "sandbox",
                            {"timeout_secs", "memory_bytes", "max_output_bytes", "slots", "interpreter", "clock"});
    if (s.contains("timeout_secs")) {
        const double secs = get_or<double>(s, "timeout_secs", 0.0);
        if (!(secs > 0.0) || !std::isfinite(secs)) throw ConfigError("timeout_secs must be positive");
        c.limits.timeout = std::chrono::milliseconds(static_cast<long long>(std::llround(secs * 1000.0)));
    }
    c.limits.memory_cap = get_seed(s, "memory_bytes", c.limits.memory_cap);
    c.limits.max_output_bytes = get_count(s, "max_output_bytes", c.limits.max_output_bytes);
    c.sandbox_slots = get_count(s, "slots", c.sandbox_slots);
    if (s.contains("interpreter")) c.interpreter.command = get_or<std::vector<std::string>>(s, "interpreter", {});
    c.clock = get_or<std::string>(s, "clock", c.clock);

    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    const json j = json::parse(text.str(), nullptr, false, /*ignore_comments=*/true);
    if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
    return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
    json corpus = json::array();
    for (const fs::path& p : corpus_paths) corpus.push_back(p.string());
    return json{
        {"corpus", std::move(corpus)},
        {"output_dir", output_dir.string()},
        {"seed", seed},
        {"threads", threads},
        {"filter",
         {{"min_lines", filter.min_lines},
          {"min_chars", filter.min_chars},
          {"visualization_modules", filter.visualization_modules}}},
        {"curation",
         {{"gamma", curation.gamma},
          {"subset_cap", curation.subset_cap},
          {"iterations", curation.iterations},
          {"seed", curation.rng_seed}}},
        {"augmentation",
         {{"digit", augmentation.digit_enabled},
          {"logical", augmentation.logical_enabled},
          {"digit_prob", augmentation.digit_prob},
          {"max_logical_edits", augmentation.max_logical_edits},
          {"errors", error_classes_json(augmentation.allowed_error_classes)},
          {"syntax_break_prob", augmentation.syntax_break_prob},
          {"seed", augmentation.rng_seed}}},
        {"tasks", {{"mix", {{"forward", mix.forward}, {"backward", mix.backward}}}, {"seed", task_seed}}},
        {"reward", {{"w", reward.w}, {"beta", reward.beta}}},
        {"sandbox",
         {{"timeout_secs", static_cast<double>(limits.timeout.count()) / 1000.0},
          {"memory_bytes", limits.memory_cap},
          {"max_output_bytes", limits.max_output_bytes},
          {"slots", sandbox_slots},
          {"interpreter", interpreter.command},
          {"clock", clock}}},
    };
}

SandboxOptions PipelineConfig::sandbox_options() const {
    SandboxOptions options;
    options.slots = sandbox_slots;
    options.limits = limits;
    options.interpreter = interpreter;
    options.clock = make_clock(clock);
    return options;
}

void write_corpus(const fs::path& path, const std::vector<RawRecord>& records) {
    write_text_file(path, corpus_text(records));
}

IngestReport ingest_corpora(const std::vector<fs::path>& corpora, const FilterConfig& filter, Executor& executor,
                            std::size_t threads) {
    IngestReport report;
    std::vector<RawRecord> all;
    std::unordered_set<std::string> ids;
    for (const fs::path& path : corpora) {
        LoadedCorpus loaded = load_corpus(path);
        report.malformed += loaded.skipped;
        for (RawRecord& r : loaded.records) {
            if (!ids.insert(r.snippet.id).second) {
                ++report.malformed;
                continue;
            }
            all.push_back(std::move(r));
        }
    }
    report.read = all.size();

    std::vector<FilterVerdict> verdicts(all.size());
    parallel_for(all.size(), threads, [&](std::size_t i) {
        const RawRecord& record = all[i];
        ExecutionOutcome unrun;
        unrun.status = ExecutionStatus::Clean;
        verdicts[i] = basic_filter(record, unrun, filter);
        if (verdicts[i].reason == FilterReason::TooShort) return;
        ExecutableUnit unit;
        try {
            unit = materialize_input(record.snippet, record.primary_input());
        } catch (const MaterializationError&) {
            verdicts[i] = {false, FilterReason::ExecutionFailed};
            return;
        }
        const ExecutionOutcome probe = executor.run(unit).outcome;
        if (probe.status == ExecutionStatus::SpawnFailed) {
            throw InfrastructureError("cannot execute probe for record " + record.snippet.id + ": " +
                                      probe.stderr_text);
        }
        verdicts[i] = basic_filter(record, probe, filter);
    });
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (verdicts[i].keep) {
            report.kept.push_back(std::move(all[i]));
        } else {
            ++report.rejections[std::string(to_string(verdicts[i].reason))];
        }
    }
    return report;
}

std::vector<RawRecord> curate_records(const std::vector<RawRecord>& records, const CurationConfig& config,
                                      CurationStats* stats) {
    std::vector<CodeSnippet> snippets;
    std::unordered_map<std::string, const RawRecord*> by_id;
    snippets.reserve(records.size());
    for (const RawRecord& r : records) {
        if (!by_id.emplace(r.snippet.id, &r).second) throw Error("duplicate record id " + r.snippet.id);
        snippets.push_back(r.snippet);
    }
    std::vector<RawRecord> out;
    for (const CodeSnippet& s : curate(snippets, config, stats)) out.push_back(*by_id.at(s.id));
    return out;
}

AugmentReport augment_records(const std::vector<RawRecord>& records, const AugmentationPolicy& policy,
                              Executor& executor, std::size_t threads) {
    policy.validate();
    std::vector<PrepareResult> results(records.size());
    parallel_for(records.size(), threads,
                 [&](std::size_t i) { results[i] = prepare_training_sample(records[i], policy, executor); });
    AugmentReport report;
    for (PrepareResult& r : results) {
        if (r.accepted) {
            report.samples.push_back(std::move(*r.accepted));
        } else {
            ++report.rejections[std::string(to_string(r.reason))];
        }
    }
    return report;
}

json Manifest::to_json() const {
    json stage_rows = json::array();
    for (const StageSummary& s : stages) {
        stage_rows.push_back({{"name", s.name},
                              {"input_n", s.input_n},
                              {"output_n", s.output_n},
                              {"rejections", s.rejections},
                              {"output", s.output},
                              {"details", s.extra}});
    }
    return json{{"stages", std::move(stage_rows)},
                {"seeds", seeds},
                {"template", {{"version", template_version}, {"hash", template_hash}}}};
}

Manifest run_pipeline(const PipelineConfig& config) {
    config.validate();
    SandboxPool pool = [&]() -> SandboxPool {
        try {
            return SandboxPool(config.sandbox_options());
        } catch (const std::exception& e) {
            throw StageError("sandbox", e.what());
        }
    }();
    return run_pipeline(config, pool);
}

Manifest run_pipeline(const PipelineConfig& config, Executor& executor) {
    config.validate();
    const fs::path& out = config.output_dir;
    in_stage("setup", [&] {
        fs::create_directories(out);
        return 0;
    });
    const std::size_t threads = resolve_threads(config.threads);
    Manifest manifest;
    manifest.seeds = {{"seed", config.seed},
                      {"curation", config.curation.rng_seed},
                      {"augmentation", config.augmentation.rng_seed},
                      {"tasks", config.task_seed}};
    manifest.template_version = prompt_template().version;
    manifest.template_hash = prompt_template().hash;

    IngestReport ingest = in_stage("ingest", [&] {
        IngestReport r = ingest_corpora(config.corpus_paths, config.filter, executor, threads);
        write_corpus(out / "ingested.jsonl", r.kept);
        return r;
    });
    manifest.stages.push_back({"ingest", ingest.read + ingest.malformed, ingest.kept.size(), ingest.rejections,
                               "ingested.jsonl", json{{"malformed_lines", ingest.malformed}}});

    CurationConfig curation = config.curation;
    curation.threads = threads;
    CurationStats curation_stats;
    const std::vector<RawRecord> curated = in_stage("curate", [&] {
        std::vector<RawRecord> r = curate_records(ingest.kept, curation, &curation_stats);
        write_corpus(out / "curated.jsonl", r);
        return r;
    });
    manifest.stages.push_back({"curate", ingest.kept.size(), curated.size(),
                               Histogram{{"not_in_clique", ingest.kept.size() - curated.size()}}, "curated.jsonl",
                               json{{"iterations", curation.iterations},
                                    {"sizes_per_iteration", curation_stats.sizes_per_iteration}}});

    AugmentReport augmented = in_stage("augment", [&] {
        AugmentReport r = augment_records(curated, config.augmentation, executor, threads);
        std::vector<json> rows;
        for (const PreparedSample& s : r.samples) rows.push_back(to_json(s));
        write_text_file(out / "samples.jsonl", jsonl_text(rows));
        return r;
    });
    manifest.stages.push_back(
        {"augment", curated.size(), augmented.samples.size(), augmented.rejections, "samples.jsonl", json::object()});

    TaskGenStats task_stats;
    const std::vector<TaskInstance> tasks = in_stage("tasks", [&] {
        std::vector<TaskInstance> t = generate_tasks(augmented.samples, config.mix, config.task_seed, &task_stats, threads);
        std::vector<json> rows;
        for (const TaskInstance& task : t) rows.push_back(to_json(task));
        write_text_file(out / "tasks.jsonl", jsonl_text(rows));
        return t;
    });
    manifest.stages.push_back({"tasks", augmented.samples.size(), tasks.size(), Histogram{}, "tasks.jsonl",
                               json{{"forward", task_stats.forward},
                                    {"backward", task_stats.backward},
                                    {"backward_fallbacks", task_stats.backward_fallbacks},
                                    {"mix", config.mix.format()}}});

    in_stage("manifest", [&] {
        json doc = manifest.to_json();
        doc["config"] = config.to_json();
        write_text_file(out / "manifest.json", doc.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
        return 0;
    });
    return manifest;
}

ScoreRequest ScoreRequest::from_json(const json& j) {
    if (!j.is_object()) throw Error("request must be a JSON object");
    const auto id = j.find("task_id");
    const auto text = j.find("response_text");
    if (id == j.end() || !id->is_string()) throw Error("task_id must be a string");
    if (text == j.end() || !text->is_string()) throw Error("response_text must be a string");
    ScoreRequest r{id->get<std::string>(), text->get<std::string>(), std::nullopt};
    if (const auto g = j.find("group_id"); g != j.end() && !g->is_null()) {
        if (!g->is_string()) throw Error("group_id must be a string");
        r.group_id = g->get<std::string>();
    }
    return r;
}

json ScoreResult::to_json() const {
    json j = reward ? codeforge::to_json(*reward) : json{{"error", {{"code", error_code}, {"message", error_message}}}};
    j["task_id"] = task_id;
    if (group_id) j["group_id"] = *group_id;
    return j;
}

TaskStore::TaskStore(std::vector<TaskInstance> tasks) : tasks_(std::move(tasks)) {
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        if (!index_.emplace(tasks_[i].task_id, i).second) throw Error("duplicate task id " + tasks_[i].task_id);
    }
}

TaskStore TaskStore::load(const fs::path& path) { return TaskStore(read_tasks(path)); }

const TaskInstance* TaskStore::find(const std::string& task_id) const {
    const auto it = index_.find(task_id);
    return it == index_.end() ? nullptr : &tasks_[it->second];
}

ScoreResult score_request(const TaskStore& store, const ScoreRequest& request, const RewardConfig& config,
                          Executor& executor) {
    ScoreResult result{request.task_id, request.group_id, std::nullopt, {}, {}};
    const TaskInstance* task = store.find(request.task_id);
    if (task == nullptr) {
        result.error_code = "task_not_found";
        result.error_message = "no task with id " + request.task_id;
        return result;
    }
    result.reward = score_response(request.response_text, *task, config, executor);
    return result;
}

std::vector<ScoreResult> score_batch(const TaskStore& store, const std::vector<ScoreRequest>& requests,
                                     const RewardConfig& config, Executor& executor, std::size_t threads) {
    config.validate();
    std::vector<ScoreResult> results(requests.size());
    parallel_for(requests.size(), threads,
                 [&](std::size_t i) { results[i] = score_request(store, requests[i], config, executor); });
    return results;
}

}  // namespace codeforge
