#include <doctest.h>

#include "codeforge/corpus.hpp"
#include "codeforge/errors.hpp"
#include "support.hpp"

using namespace codeforge;

namespace {

std::string lines(std::size_t n, const std::string& stem = "value") {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) out += stem + "_" + std::to_string(i) + " = " + std::to_string(i) + "\n";
    return out;
}

RawRecord record_of(const std::string& source) {
    RawRecord r;
    r.snippet = CodeSnippet::make("r1", source, "test");
    return r;
}

ExecutionOutcome clean_probe() {
    ExecutionOutcome o;
    o.status = ExecutionStatus::Clean;
    o.exit_code = 0;
    return o;
}

}  // namespace

TEST_SUITE("corpus") {
    TEST_CASE("line and character counts") {
        CHECK(count_lines("") == 0);
        CHECK(count_lines("a") == 1);
        CHECK(count_lines("a\nb") == 2);
        CHECK(count_lines("a\nb\n") == 2);
        CHECK(count_lines("\n\n") == 2);
        CHECK(count_code_points("h\xC3\xA9llo") == 5);
        const CodeSnippet s = CodeSnippet::make("x", "print('\xE2\x82\xAC')\n");
        CHECK(s.line_count == 1);
        CHECK(s.char_count == 11);
    }

    TEST_CASE("corpus lines parse into records") {
        const auto r = parse_corpus_line(
            R"j({"id":"a","source":"print(1)\n","inputs":[{"kind":"stdin","value":"3 4\n"},{"kind":"function","value":"f(2)"},{"kind":"none"}],"origin":"set"})j");
        REQUIRE(r.has_value());
        CHECK(r->snippet.id == "a");
        CHECK(r->snippet.origin == "set");
        REQUIRE(r->inputs.size() == 3);
        CHECK(r->inputs[0] == InputSpec::from_stdin("3 4\n"));
        CHECK(r->inputs[1] == InputSpec::from_call("f(2)"));
        CHECK(r->inputs[2] == InputSpec::none());
        CHECK(parse_corpus_line(format_corpus_line(*r)) == r);
    }

    TEST_CASE("malformed corpus lines are rejected") {
        CHECK_FALSE(parse_corpus_line("not json").has_value());
        CHECK_FALSE(parse_corpus_line(R"({"source":"x"})").has_value());
        CHECK_FALSE(parse_corpus_line(R"({"id":"a","source":1})").has_value());
        CHECK_FALSE(parse_corpus_line(R"({"id":"a","source":"x","inputs":[{"kind":"socket"}]})").has_value());
        CHECK_FALSE(parse_corpus_line(R"({"id":"a","source":"x","inputs":[{"kind":"stdin"}]})").has_value());
    }

    TEST_CASE("load_corpus yields valid records and counts skips") {
        test::TempDir dir;
        const auto path = dir.path() / "c.jsonl";
        test::write_file(path, R"({"id":"a","source":"x=1"})" "\n"
                               R"({"id":"b","source":"x=2"})" "\n"
                               "{broken\n"
                               "\n"
                               R"({"id":"c","source":"x=3"})" "\n");
        const LoadedCorpus corpus = load_corpus(path);
        REQUIRE(corpus.records.size() == 3);
        CHECK(corpus.skipped == 1);
        CHECK(corpus.records[2].snippet.id == "c");
    }

    TEST_CASE("three valid lines give three records and no skips") {
        test::TempDir dir;
        const auto path = dir.path() / "c.jsonl";
        test::write_file(path, R"({"id":"a","source":"1"})" "\n" R"({"id":"b","source":"2"})" "\n"
                               R"({"id":"c","source":"3"})" "\n");
        const LoadedCorpus corpus = load_corpus(path);
        CHECK(corpus.records.size() == 3);
        CHECK(corpus.skipped == 0);
    }

    TEST_CASE("duplicate ids are skipped") {
        test::TempDir dir;
        const auto path = dir.path() / "c.jsonl";
        test::write_file(path, R"({"id":"a","source":"1"})" "\n" R"({"id":"a","source":"2"})" "\n");
        const LoadedCorpus corpus = load_corpus(path);
        CHECK(corpus.records.size() == 1);
        CHECK(corpus.skipped == 1);
    }

    TEST_CASE("empty or unreadable corpora are errors") {
        test::TempDir dir;
        test::write_file(dir.path() / "empty.jsonl", "");
        CHECK_THROWS_AS(load_corpus(dir.path() / "empty.jsonl"), EmptyCorpusError);
        test::write_file(dir.path() / "junk.jsonl", "junk\n");
        CHECK_THROWS_AS(load_corpus(dir.path() / "junk.jsonl"), EmptyCorpusError);
        CHECK_THROWS_AS(load_corpus(dir.path() / "missing.jsonl"), IoError);
    }

    TEST_CASE("short snippets are filtered first") {
        std::string nine = lines(9, std::string(50, 'v'));
        REQUIRE(count_code_points(nine) >= 500);
        CHECK(basic_filter(record_of(nine), clean_probe()) == FilterVerdict{false, FilterReason::TooShort});
        CHECK(basic_filter(record_of("a=1\n" + std::string(9, '\n')), clean_probe()).reason ==
              FilterReason::TooShort);
    }

    TEST_CASE("failed probes are filtered") {
        ExecutionOutcome timeout;
        timeout.status = ExecutionStatus::Timeout;
        CHECK(basic_filter(record_of(lines(12)), timeout) == FilterVerdict{false, FilterReason::ExecutionFailed});
        ExecutionOutcome crashed;
        crashed.status = ExecutionStatus::NonzeroExit;
        crashed.exit_code = 1;
        CHECK(basic_filter(record_of(lines(12)), crashed).reason == FilterReason::ExecutionFailed);
    }

    TEST_CASE("visualization imports are filtered") {
        CHECK(basic_filter(record_of("import matplotlib.pyplot as plt\n" + lines(11)), clean_probe()) ==
              FilterVerdict{false, FilterReason::VisualizationRelated});
        CHECK(basic_filter(record_of(lines(11) + "def f():\n    from seaborn import load\n"), clean_probe()).reason ==
              FilterReason::VisualizationRelated);
        CHECK(basic_filter(record_of("import os, turtle\n" + lines(11)), clean_probe()).reason ==
              FilterReason::VisualizationRelated);
        // Names that merely mention a module are fine.
        CHECK(basic_filter(record_of("matplotlib = 3\nimport mathplot\n" + lines(11)), clean_probe()).keep);
    }

    TEST_CASE("custom deny-list and thresholds") {
        FilterConfig config;
        config.min_lines = 2;
        config.visualization_modules = {"numpy"};
        CHECK(basic_filter(record_of("import numpy as np\nx = np.zeros(3)\n"), clean_probe(), config).reason ==
              FilterReason::VisualizationRelated);
        CHECK(basic_filter(record_of("import matplotlib\nx = matplotlib.__name__\n"), clean_probe(), config).keep);
    }

    TEST_CASE("unparseable source is filtered") {
        CHECK(basic_filter(record_of(lines(11) + "def broken(:\n"), clean_probe()) ==
              FilterVerdict{false, FilterReason::Unparseable});
    }

    TEST_CASE("clean, long, plain snippets are kept") {
        CHECK(basic_filter(record_of(lines(12)), clean_probe()) == FilterVerdict{true, FilterReason::Ok});
    }

    TEST_CASE("materialization") {
        const CodeSnippet p = CodeSnippet::make("p", "def f(a, b):\n    return a * b\n");
        CHECK(materialize_input(p, InputSpec::none()) == ExecutableUnit{p.source_text, ""});
        CHECK(materialize_input(p, InputSpec::from_stdin("3 4\n")) == ExecutableUnit{p.source_text, "3 4\n"});
        const ExecutableUnit call = materialize_input(p, InputSpec::from_call("f(2, 5)"));
        CHECK(call.source_text == p.source_text + "print(f(2, 5))\n");
        CHECK(call.stdin_text.empty());
        const CodeSnippet unterminated = CodeSnippet::make("q", "def f(a):\n    return a");
        CHECK(materialize_input(unterminated, InputSpec::from_call("f(1)")).source_text ==
              "def f(a):\n    return a\nprint(f(1))\n");
        CHECK_THROWS_AS(materialize_input(p, InputSpec::from_call("f(2,")), MaterializationError);
        CHECK_THROWS_AS(materialize_input(p, InputSpec::from_call("x = f(2)")), MaterializationError);
    }

    TEST_CASE("materialized call prints its value when executed") {
        test::TempDir dir;
        const CodeSnippet p = CodeSnippet::make("p", "def f(a, b):\n    return a * b\n");
        const ExecutableUnit unit = materialize_input(p, InputSpec::from_call("f(2, 5)"));
        const ExecutionOutcome out = execute(unit.source_text, unit.stdin_text, ResourceLimits{}, dir.path());
        CHECK(out.status == ExecutionStatus::Clean);
        CHECK(out.stdout_text == "10\n");
    }
}
