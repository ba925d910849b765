#include <doctest.h>

#include "codeforge/orchestrator.hpp"
#include "fakes.hpp"
#include "support.hpp"

using namespace codeforge;

namespace {

json base_config(const std::filesystem::path& out) {
    return json{{"corpus", test::data_path("pipeline_corpus.jsonl").string()},
                {"output_dir", out.string()},
                {"seed", 17},
                {"sandbox", {{"timeout_secs", 2.0}, {"slots", 4}}}};
}

std::map<std::string, std::string> artifacts(const std::filesystem::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        files[entry.path().filename().string()] = test::read_file(entry.path());
    }
    return files;
}

const StageSummary& stage(const Manifest& m, const std::string& name) {
    for (const StageSummary& s : m.stages) {
        if (s.name == name) return s;
    }
    throw std::runtime_error("no stage " + name);
}

}  // namespace

TEST_SUITE("orchestrator") {
    TEST_CASE("config parsing applies defaults and rejects unknown keys") {
        const PipelineConfig c = PipelineConfig::from_json(
            json{{"corpus", json::array({"a.jsonl", "b.jsonl"})},
                 {"seed", 5},
                 {"curation", {{"gamma", 0.5}}},
                 {"augmentation", {{"errors", json::array({"logical"})}, {"seed", 9}}},
                 {"tasks", {{"mix", "forward=1,backward=3"}}},
                 {"sandbox", {{"timeout_secs", 1.5}, {"clock", "2024-06-01T08:00:00Z"}}}},
            "/base");
        CHECK(c.corpus_paths == std::vector<std::filesystem::path>{"/base/a.jsonl", "/base/b.jsonl"});
        CHECK(c.output_dir == std::filesystem::path("/base/codeforge-out"));
        CHECK(c.curation.gamma == 0.5);
        CHECK(c.curation.rng_seed == 5);
        CHECK(c.augmentation.rng_seed == 9);
        CHECK(c.task_seed == 5);
        CHECK(c.augmentation.allowed_error_classes == std::set<ErrorClass>{ErrorClass::None, ErrorClass::Logical});
        CHECK(c.mix.backward == 3.0);
        CHECK(c.limits.timeout == std::chrono::milliseconds(1500));
        CHECK(c.reward.w == 0.1);

        const PipelineConfig again = PipelineConfig::from_json(c.to_json());
        CHECK(again.to_json() == c.to_json());

        CHECK_THROWS_AS(PipelineConfig::from_json(json{{"corpus", "a"}, {"bogus", 1}}), ConfigError);
        CHECK_THROWS_AS(PipelineConfig::from_json(json{{"corpus", "a"}, {"curation", {{"gama", 1}}}}), ConfigError);
        CHECK_THROWS_AS(PipelineConfig::from_json(json{{"output_dir", "x"}}), ConfigError);
        CHECK_THROWS_AS(PipelineConfig::from_json(json{{"corpus", "a"}, {"curation", {{"gamma", 0}}}}), ConfigError);
        CHECK_THROWS_AS(PipelineConfig::from_json(json{{"corpus", "a"}, {"reward", {{"w", 2}}}}), ConfigError);
        CHECK_THROWS_AS(PipelineConfig::from_json(json{{"corpus", "a"}, {"sandbox", {{"clock", "noon"}}}}), ConfigError);
        CHECK_THROWS_AS(PipelineConfig::from_json(json{{"corpus", "a"}, {"seed", -1}}), ConfigError);
        CHECK_THROWS_AS(
            PipelineConfig::from_json(json{{"corpus", "a"}, {"augmentation", {{"errors", json::array({"unsupported"})}}}}),
            ConfigError);
    }

    TEST_CASE("config files are read relative to their directory") {
        test::TempDir dir;
        test::write_file(dir.path() / "conf" / "run.json", "// comment lines are allowed\n{\"corpus\": \"c.jsonl\"}\n");
        const PipelineConfig c = PipelineConfig::load(dir.path() / "conf" / "run.json");
        CHECK(c.corpus_paths.front() == dir.path() / "conf" / "c.jsonl");
        test::write_file(dir.path() / "bad.json", "{");
        CHECK_THROWS_AS(PipelineConfig::load(dir.path() / "bad.json"), ConfigError);
        CHECK_THROWS_AS(PipelineConfig::load(dir.path() / "missing.json"), IoError);
    }

    TEST_CASE("error class lists") {
        CHECK(parse_error_classes("syntax,logical") ==
              std::set<ErrorClass>{ErrorClass::None, ErrorClass::Syntax, ErrorClass::Logical});
        CHECK(parse_error_classes("") == std::set<ErrorClass>{ErrorClass::None});
        CHECK_THROWS_AS(parse_error_classes("syntax,bogus"), ConfigError);
        CHECK_THROWS_AS(parse_error_classes("unsupported"), ConfigError);
    }

    TEST_CASE("short records are rejected without running") {
        test::TempDir dir;
        test::write_file(dir.path() / "c.jsonl",
                         "{\"id\":\"a\",\"source\":\"print(1)\\n\"}\n{\"id\":\"a\",\"source\":\"x\"}\n");
        test::FakeExecutor fake([](const ExecutableUnit&) { return test::outcome(ExecutionStatus::Clean, "", ""); });
        const IngestReport r = ingest_corpora({dir.path() / "c.jsonl"}, FilterConfig{}, fake);
        CHECK(fake.calls == 0);
        CHECK(r.read == 1);
        CHECK(r.malformed == 1);
        CHECK(r.rejections == Histogram{{"too_short", 1}});
    }

    TEST_CASE("spawn failures abort ingest") {
        test::FakeExecutor broken([](const ExecutableUnit&) {
            return test::outcome(ExecutionStatus::SpawnFailed, "", "no interpreter");
        });
        CHECK_THROWS_AS(ingest_corpora({test::data_path("pipeline_corpus.jsonl")}, FilterConfig{}, broken, 2),
                        InfrastructureError);
        test::TempDir dir;
        const PipelineConfig c = PipelineConfig::from_json(base_config(dir.path()));
        try {
            run_pipeline(c, broken);
            FAIL("expected a stage error");
        } catch (const StageError& e) {
            CHECK(e.stage() == "ingest");
        }
    }

    TEST_CASE("curation keeps inputs with their snippets") {
        const LoadedCorpus corpus = load_corpus(test::data_path("pipeline_corpus.jsonl"));
        const auto curated = curate_records(corpus.records, CurationConfig{});
        for (const RawRecord& r : curated) {
            const auto it = std::find_if(corpus.records.begin(), corpus.records.end(),
                                         [&](const RawRecord& o) { return o.snippet.id == r.snippet.id; });
            REQUIRE(it != corpus.records.end());
            CHECK(*it == r);
        }
    }

    TEST_CASE("pipeline runs end to end and reproduces its artifacts") {
        test::TempDir dir;
        const PipelineConfig config = PipelineConfig::from_json(base_config(dir.path() / "out"));
        const Manifest m = run_pipeline(config);

        const StageSummary& ingest = stage(m, "ingest");
        CHECK(ingest.input_n == 21);
        CHECK(ingest.output_n == 14);
        CHECK(ingest.rejections ==
              Histogram{{"too_short", 2}, {"execution_failed", 3}, {"visualization_related", 1}});
        const StageSummary& curate = stage(m, "curate");
        const StageSummary& augment = stage(m, "augment");
        const StageSummary& tasks = stage(m, "tasks");
        CHECK(curate.output_n == 13);  // the two near-identical statistics snippets collapse
        CHECK(ingest.output_n >= curate.output_n);
        CHECK(curate.output_n >= augment.output_n);
        CHECK(augment.output_n >= tasks.output_n);
        CHECK(tasks.output_n == augment.output_n);
        CHECK(tasks.output_n > 0);
        CHECK(m.template_hash == prompt_template().hash);

        const auto first = artifacts(dir.path() / "out");
        CHECK(first.size() == 5);
        CHECK(first.count("manifest.json") == 1);
        const json manifest = json::parse(first.at("manifest.json"));
        CHECK(manifest.at("template").at("hash") == prompt_template().hash);
        CHECK(manifest.at("seeds").at("tasks") == 17);

        const auto samples = read_samples(dir.path() / "out" / "samples.jsonl");
        const auto task_rows = read_tasks(dir.path() / "out" / "tasks.jsonl");
        REQUIRE(samples.size() == task_rows.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            CHECK(samples[i].env.timestamp == "2025-01-01T00:00:00Z");
            CHECK(task_rows[i].ground_truth == samples[i].ground_truth());
        }

        run_pipeline(config);
        CHECK(artifacts(dir.path() / "out") == first);
    }

    TEST_CASE("a corpus that filters to nothing still finishes") {
        test::TempDir dir;
        test::write_file(dir.path() / "c.jsonl", "{\"id\":\"a\",\"source\":\"print(1)\\n\"}\n");
        json j = base_config(dir.path() / "out");
        j["corpus"] = (dir.path() / "c.jsonl").string();
        const Manifest m = run_pipeline(PipelineConfig::from_json(j));
        CHECK(stage(m, "ingest").rejections.at("too_short") == 1);
        CHECK(stage(m, "tasks").output_n == 0);
        CHECK(test::read_file(dir.path() / "out" / "tasks.jsonl").empty());
    }

    TEST_CASE("batch scoring keeps request order and reports unknown tasks") {
        AugmentedSample s{CodeSnippet::make("p", "print('x')\n"), {}, {}, "p"};
        const EnvironmentInfo env{"project/\nproject/main.py\n", "project/main.py", "cd project && python3 main.py",
                                  "2025-01-01T00:00:00Z"};
        TaskStore store({build_forward_task(s, {"x\n", "", ErrorClass::None}, env)});
        CHECK_THROWS_AS(TaskStore({store.tasks()[0], store.tasks()[0]}), Error);
        test::FakeExecutor fake([](const ExecutableUnit&) { return test::outcome(ExecutionStatus::Clean, "", ""); });
        const std::string good = "```answer_stdout\nx\n```\n```answer_stderr\n```\n";
        const std::vector<ScoreRequest> requests{
            {"p:fwd", good, "g1"}, {"missing", good, std::nullopt}, {"p:fwd", "junk", std::nullopt}};
        const auto results = score_batch(store, requests, RewardConfig{}, fake, 3);
        REQUIRE(results.size() == 3);
        CHECK(results[0].reward->r == doctest::Approx(0.775).epsilon(1e-12));
        CHECK(results[0].to_json().at("group_id") == "g1");
        CHECK_FALSE(results[1].reward.has_value());
        CHECK(results[1].to_json().at("error").at("code") == "task_not_found");
        CHECK(results[2].reward->r == 0.0);
        CHECK_FALSE(results[2].to_json().contains("group_id"));

        CHECK(ScoreRequest::from_json(json{{"task_id", "a"}, {"response_text", "b"}, {"group_id", nullptr}}).group_id ==
              std::nullopt);
        CHECK_THROWS_AS(ScoreRequest::from_json(json{{"task_id", "a"}}), Error);
        CHECK_THROWS_AS(ScoreRequest::from_json(json{{"task_id", 1}, {"response_text", "b"}}), Error);
        CHECK_THROWS_AS(ScoreRequest::from_json(json{{"task_id", "a"}, {"response_text", "b"}, {"group_id", 3}}), Error);
    }
}
