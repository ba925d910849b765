// codeforge: command-line front end for the data and reward pipeline.
//
// Every subcommand prints one JSON summary line on stdout. Errors go to
// stderr with exit status 2 for bad arguments or configuration and 1 for
// anything else.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <thread>

#include "codeforge/orchestrator.hpp"
#include "codeforge/service.hpp"

namespace fs = std::filesystem;
using namespace codeforge;

namespace {

constexpr const char* kDefaultClock = "2025-01-01T00:00:00Z";

void print_summary(const json& summary) { std::cout << dump_line(summary) << std::endl; }

SandboxOptions sandbox_from_environment(const std::string& clock) {
    SandboxOptions options;
    options.limits = ResourceLimits::from_environment();
    options.limits.validate();
    options.interpreter = InterpreterProfile::from_environment();
    options.clock = make_clock(clock);
    return options;
}

std::vector<RawRecord> read_corpus_file(const fs::path& path, std::size_t* skipped = nullptr) {
    LoadedCorpus loaded = load_corpus(path);
    if (skipped) *skipped = loaded.skipped;
    return std::move(loaded.records);
}

int cmd_ingest(const std::vector<fs::path>& corpora, const fs::path& out, const FilterConfig& filter,
               const std::string& clock) {
    SandboxPool pool(sandbox_from_environment(clock));
    const IngestReport r = ingest_corpora(corpora, filter, pool);
    write_corpus(out, r.kept);
    print_summary({{"input_n", r.read + r.malformed},
                   {"output_n", r.kept.size()},
                   {"malformed", r.malformed},
                   {"rejections", r.rejections}});
    return 0;
}

int cmd_curate(const fs::path& in, const fs::path& out, const CurationConfig& config) {
    config.validate();
    const std::vector<RawRecord> records = read_corpus_file(in);
    CurationStats stats;
    const std::vector<RawRecord> kept = curate_records(records, config, &stats);
    write_corpus(out, kept);
    print_summary({{"input_n", records.size()},
                   {"output_n", kept.size()},
                   {"iterations", config.iterations},
                   {"seed", config.rng_seed}});
    return 0;
}

int cmd_augment(const fs::path& in, const fs::path& out, const AugmentationPolicy& policy, const std::string& clock) {
    policy.validate();
    const std::vector<RawRecord> records = read_corpus_file(in);
    SandboxPool pool(sandbox_from_environment(clock));
    const AugmentReport r = augment_records(records, policy, pool);
    std::vector<json> rows;
    std::map<std::string, std::size_t> by_class;
    for (const PreparedSample& s : r.samples) {
        rows.push_back(to_json(s));
        ++by_class[std::string(to_string(s.error_class))];
    }
    write_jsonl(out, rows);
    print_summary({{"input_n", records.size()},
                   {"output_n", r.samples.size()},
                   {"error_classes", by_class},
                   {"rejections", r.rejections},
                   {"seed", policy.rng_seed}});
    return 0;
}

int cmd_tasks(const fs::path& in, const fs::path& out, const TaskMix& mix, std::uint64_t seed) {
    mix.validate();
    const std::vector<PreparedSample> samples = read_samples(in);
    TaskGenStats stats;
    const std::vector<TaskInstance> tasks = generate_tasks(samples, mix, seed, &stats);
    std::vector<json> rows;
    for (const TaskInstance& t : tasks) rows.push_back(to_json(t));
    write_jsonl(out, rows);
    print_summary({{"input_n", samples.size()},
                   {"output_n", tasks.size()},
                   {"forward", stats.forward},
                   {"backward", stats.backward},
                   {"backward_fallbacks", stats.backward_fallbacks},
                   {"template_hash", prompt_template().hash},
                   {"seed", seed}});
    return 0;
}

int cmd_score(const fs::path& tasks_path, const fs::path& responses_path, const fs::path& out,
              const RewardConfig& reward) {
    reward.validate();
    const TaskStore store = TaskStore::load(tasks_path);
    std::vector<ScoreRequest> requests;
    std::size_t line = 0;
    for (const json& row : read_jsonl(responses_path)) {
        ++line;
        try {
            requests.push_back(ScoreRequest::from_json(row));
        } catch (const Error& e) {
            throw Error(responses_path.string() + ": record " + std::to_string(line) + ": " + e.what());
        }
    }
    SandboxPool pool(sandbox_from_environment(kDefaultClock));
    const std::vector<ScoreResult> results = score_batch(store, requests, reward, pool);
    std::vector<json> rows;
    std::size_t errors = 0;
    double total = 0.0;
    for (const ScoreResult& r : results) {
        rows.push_back(r.to_json());
        if (r.reward) {
            total += r.reward->r;
        } else {
            ++errors;
        }
    }
    write_jsonl(out, rows);
    const std::size_t scored = results.size() - errors;
    print_summary({{"input_n", requests.size()},
                   {"scored", scored},
                   {"errors", errors},
                   {"mean_r", scored ? total / static_cast<double>(scored) : 0.0}});
    return 0;
}

int cmd_run(const fs::path& config_path) {
    const PipelineConfig config = PipelineConfig::load(config_path);
    const Manifest m = run_pipeline(config);
    json stages = json::array();
    for (const StageSummary& s : m.stages) {
        stages.push_back({{"name", s.name}, {"input_n", s.input_n}, {"output_n", s.output_n}});
    }
    print_summary({{"output_dir", config.output_dir.string()}, {"stages", stages}, {"seed", config.seed}});
    return 0;
}

int cmd_serve(const fs::path& tasks_path, const std::string& bind, const RewardConfig& reward, std::size_t slots) {
    const auto [host, port] = parse_bind_address(bind);
    ServiceOptions options;
    options.reward = reward;
    options.sandbox = sandbox_from_environment("system");
    options.sandbox.slots = slots;

    // Block termination signals before any thread starts so only sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    RewardService service(TaskStore::load(tasks_path), std::move(options));
    const int bound = service.bind(host, port);
    std::thread server([&] { service.serve(); });
    service.wait_until_ready();
    print_summary({{"listening", host + ":" + std::to_string(bound)}, {"tasks", service.store().size()}});

    int received = 0;
    sigwait(&signals, &received);
    service.stop();
    server.join();
    print_summary({{"stopped", true}, {"scored", service.scored()}, {"rejected_busy", service.rejected_busy()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"codeforge: build code-reasoning training data and score model responses"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "codeforge 0.1.0");

    std::vector<fs::path> corpora;
    fs::path in_path;
    fs::path out_path;
    std::string clock = kDefaultClock;

    FilterConfig filter;
    auto* ingest = app.add_subcommand("ingest", "Load corpora, run each snippet and apply the basic filters");
    ingest->add_option("--corpus", corpora, "Corpus JSONL file(s)")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", out_path, "Output JSONL of kept records")->required();
    ingest->add_option("--min-lines", filter.min_lines, "Minimum line count")->capture_default_str();
    ingest->add_option("--min-chars", filter.min_chars, "Minimum character count")->capture_default_str();
    ingest->add_option("--clock", clock, "Timestamp shown to programs, or 'system'")->capture_default_str();

    CurationConfig curation;
    auto* curate = app.add_subcommand("curate", "Keep a large set of structurally distinct snippets");
    curate->add_option("--in", in_path, "Input corpus JSONL")->required()->check(CLI::ExistingFile);
    curate->add_option("--out", out_path, "Output corpus JSONL")->required();
    curate->add_option("--gamma", curation.gamma, "Distinctness threshold")->capture_default_str();
    curate->add_option("--subset-cap", curation.subset_cap, "Snippets per clique search")->capture_default_str();
    curate->add_option("--iters", curation.iterations, "Curation rounds")->capture_default_str();
    curate->add_option("--seed", curation.rng_seed, "Shuffle seed")->capture_default_str();

    AugmentationPolicy policy;
    std::string errors = "syntax,logical";
    auto* augment = app.add_subcommand("augment", "Mutate snippets and record their ground-truth outputs");
    augment->add_option("--in", in_path, "Input corpus JSONL")->required()->check(CLI::ExistingFile);
    augment->add_option("--out", out_path, "Output samples JSONL")->required();
    augment->add_option("--errors", errors, "Error classes allowed besides clean runs")->capture_default_str();
    augment->add_option("--digit-prob", policy.digit_prob, "Per-digit mutation probability")->capture_default_str();
    augment->add_option("--seed", policy.rng_seed, "Mutation seed")->capture_default_str();
    augment->add_option("--clock", clock, "Timestamp shown to programs, or 'system'")->capture_default_str();

    std::string mix_text = "forward=0.5,backward=0.5";
    std::uint64_t task_seed = 17;
    auto* tasks = app.add_subcommand("tasks", "Turn samples into forward and backward reasoning tasks");
    tasks->add_option("--in", in_path, "Input samples JSONL")->required()->check(CLI::ExistingFile);
    tasks->add_option("--out", out_path, "Output tasks JSONL")->required();
    tasks->add_option("--mix", mix_text, "Direction weights")->capture_default_str();
    tasks->add_option("--seed", task_seed, "Generation seed")->capture_default_str();

    RewardConfig reward;
    fs::path tasks_path;
    fs::path responses_path;
    auto* score = app.add_subcommand("score", "Score model responses against tasks");
    score->add_option("--tasks", tasks_path, "Tasks JSONL")->required()->check(CLI::ExistingFile);
    score->add_option("--responses", responses_path, "Responses JSONL {task_id, response_text}")
        ->required()
        ->check(CLI::ExistingFile);
    score->add_option("--out", out_path, "Output rewards JSONL")->required();
    score->add_option("--w", reward.w, "Weight of the stderr similarity")->capture_default_str();
    score->add_option("--beta", reward.beta, "Weight of the execution reward")->capture_default_str();

    fs::path config_path;
    auto* run = app.add_subcommand("run", "Run ingest, curate, augment and tasks from one config file");
    run->add_option("--config", config_path, "Pipeline config JSON")->required()->check(CLI::ExistingFile);

    std::string bind = "127.0.0.1:8080";
    std::size_t slots = 0;
    auto* serve = app.add_subcommand("serve", "Serve the reward function over HTTP");
    serve->add_option("--tasks", tasks_path, "Tasks JSONL")->required()->check(CLI::ExistingFile);
    serve->add_option("--bind", bind, "host:port")->capture_default_str();
    serve->add_option("--w", reward.w, "Weight of the stderr similarity")->capture_default_str();
    serve->add_option("--beta", reward.beta, "Weight of the execution reward")->capture_default_str();
    serve->add_option("--slots", slots, "Sandbox slots, 0 for one per CPU")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest) return cmd_ingest(corpora, out_path, filter, clock);
        if (*curate) return cmd_curate(in_path, out_path, curation);
        if (*augment) {
            policy.allowed_error_classes = parse_error_classes(errors);
            return cmd_augment(in_path, out_path, policy, clock);
        }
        if (*tasks) return cmd_tasks(in_path, out_path, TaskMix::parse(mix_text), task_seed);
        if (*score) return cmd_score(tasks_path, responses_path, out_path, reward);
        if (*run) return cmd_run(config_path);
        if (*serve) return cmd_serve(tasks_path, bind, reward, slots);
    } catch (const ConfigError& e) {
        std::cerr << "codeforge: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "codeforge: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
