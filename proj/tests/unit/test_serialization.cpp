#include <doctest.h>

#include "codeforge/errors.hpp"
#include "codeforge/serialization.hpp"
#include "support.hpp"

using namespace codeforge;

namespace {

const EnvironmentInfo kEnv{"project/\nproject/main.py\n", "project/main.py", "cd project && python3 main.py",
                           "2025-01-01T00:00:00Z"};

PreparedSample sample() {
    PreparedSample p;
    p.sample.snippet = CodeSnippet::make("s1", "x = 11\nprint(x)\nprint(y)\n", "fixture");
    p.sample.parent_id = "s1";
    p.sample.inputs = {InputSpec::from_stdin("1 2\n"), InputSpec::from_call("f(1)"), InputSpec::none()};
    p.sample.edit_log = {{EditKind::Digit, "source", 4, "1", "7"}, {EditKind::Digit, "input:0", 0, "1", "5"}};
    p.outcome.status = ExecutionStatus::NonzeroExit;
    p.outcome.exit_code = 1;
    p.outcome.stdout_text = "17\n";
    p.outcome.stderr_text = "NameError: name 'y' is not defined\n";
    p.outcome.wall_time = std::chrono::duration<double>(0.25);
    p.env = kEnv;
    p.error_class = ErrorClass::Logical;
    return p;
}

}  // namespace

TEST_SUITE("serialization") {
    TEST_CASE("prepared samples round-trip without timing data") {
        const PreparedSample p = sample();
        const json j = to_json(p);
        CHECK_FALSE(j.at("outcome").contains("wall_time"));
        const PreparedSample back = prepared_sample_from_json(json::parse(dump_line(j)));
        CHECK(back.sample.snippet == p.sample.snippet);
        CHECK(back.sample.inputs == p.sample.inputs);
        CHECK(back.sample.edit_log == p.sample.edit_log);
        CHECK(back.sample.parent_id == "s1");
        CHECK(back.outcome.stdout_text == p.outcome.stdout_text);
        CHECK(back.outcome.stderr_text == p.outcome.stderr_text);
        CHECK(back.outcome.status == p.outcome.status);
        CHECK(back.outcome.exit_code == 1);
        CHECK(back.env == kEnv);
        CHECK(back.error_class == ErrorClass::Logical);
        CHECK(dump_line(to_json(back)) == dump_line(j));
    }

    TEST_CASE("tasks round-trip and the public view hides ground truth") {
        const std::string src = "a = 1\nb = 2\nc = 3\nd = 4\nprint(a)\nprint(b)\nprint(c)\nprint(d)\n";
        const AugmentedSample s{CodeSnippet::make("t", src), {InputSpec::from_stdin("x\n")}, {}, "t"};
        const TaskInstance task = build_backward_task(s, {"1\n2\n3\n4\n", "secret\n", ErrorClass::None}, kEnv, 2, 3);
        const json j = to_json(task);
        CHECK(task_from_json(json::parse(dump_line(j))) == task);

        const json pub = public_task_json(task);
        const std::string text = dump_line(pub);
        CHECK_FALSE(pub.contains("hidden"));
        CHECK_FALSE(pub.contains("ground_truth"));
        CHECK_FALSE(pub.contains("mask_map"));
        for (const MaskEntry& m : task.mask_map) CHECK(text.find(m.original_line) == std::string::npos);
        CHECK(pub.at("prompt_text") == task.prompt_text);

        // Backward prompts show the expected output on purpose; forward ones never do.
        const TaskInstance fwd = build_forward_task(s, {"1\n2\n3\n4\n", "secret\n", ErrorClass::None}, kEnv);
        CHECK(task_from_json(to_json(fwd)) == fwd);
        CHECK(dump_line(public_task_json(fwd)).find("secret") == std::string::npos);
    }

    TEST_CASE("reward breakdown fields") {
        const json j = to_json(RewardBreakdown{1, 0, 0.5, 0.325});
        CHECK(j.at("r_format") == 1);
        CHECK(j.at("r_o") == 0);
        CHECK(j.at("r_e") == 0.5);
        CHECK(j.at("r") == 0.325);
        CHECK(dump_line(j) == R"({"r":0.325,"r_e":0.5,"r_format":1,"r_o":0})");
    }

    TEST_CASE("jsonl files") {
        test::TempDir dir;
        const auto path = dir.path() / "nested" / "rows.jsonl";
        write_jsonl(path, {json{{"a", 1}}, json{{"b", "two"}}});
        CHECK(test::read_file(path) == "{\"a\":1}\n{\"b\":\"two\"}\n");
        const auto rows = read_jsonl(path);
        REQUIRE(rows.size() == 2);
        CHECK(rows[1].at("b") == "two");

        test::write_file(dir.path() / "bad.jsonl", "{\"a\":1}\n{oops\n");
        CHECK_THROWS_AS(read_jsonl(dir.path() / "bad.jsonl"), Error);
        CHECK_THROWS_AS(read_jsonl(dir.path() / "missing.jsonl"), IoError);

        write_jsonl(dir.path() / "samples.jsonl", {to_json(sample())});
        CHECK(read_samples(dir.path() / "samples.jsonl").size() == 1);
        test::write_file(dir.path() / "wrong.jsonl", "{\"id\":\"x\"}\n");
        CHECK_THROWS_AS(read_samples(dir.path() / "wrong.jsonl"), Error);
        CHECK_THROWS_AS(read_tasks(dir.path() / "wrong.jsonl"), Error);
    }
}
