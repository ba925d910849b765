#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "codeforge/sandbox.hpp"

namespace codeforge {

struct CodeSnippet {
    std::string id;
    std::string source_text;
    std::size_t line_count = 0;
    std::size_t char_count = 0;  // Unicode code points
    std::string origin;

    /// Builds a snippet with line/char counts derived from the text.
    static CodeSnippet make(std::string id, std::string source_text, std::string origin = {});

    bool operator==(const CodeSnippet&) const = default;
};

/// Newline-delimited line count: "a\nb" and "a\nb\n" both have 2 lines.
std::size_t count_lines(std::string_view text);
std::size_t count_code_points(std::string_view text);

enum class InputKind { NoInput, Stdin, FunctionInput };

std::string_view to_string(InputKind kind);  // "none" / "stdin" / "function"
InputKind input_kind_from_string(std::string_view text);

struct InputSpec {
    InputKind kind = InputKind::NoInput;
    std::string stdin_text;       // populated iff kind == Stdin
    std::string call_expression;  // populated iff kind == FunctionInput

    static InputSpec none() { return {}; }
    static InputSpec from_stdin(std::string text) { return {InputKind::Stdin, std::move(text), {}}; }
    static InputSpec from_call(std::string call) { return {InputKind::FunctionInput, {}, std::move(call)}; }

    bool operator==(const InputSpec&) const = default;
};

struct RawRecord {
    CodeSnippet snippet;
    std::vector<InputSpec> inputs;  // empty means a single NoInput

    /// The input the filter probe and augmentation execute with.
    InputSpec primary_input() const { return inputs.empty() ? InputSpec::none() : inputs.front(); }

    bool operator==(const RawRecord&) const = default;
};

enum class FilterReason { Ok, ExecutionFailed, TooShort, VisualizationRelated, Unparseable };

std::string_view to_string(FilterReason reason);

struct FilterVerdict {
    bool keep = true;
    FilterReason reason = FilterReason::Ok;

    bool operator==(const FilterVerdict&) const = default;
};

struct FilterConfig {
    std::size_t min_lines = 10;
    std::size_t min_chars = 30;
    /// Top-level module names whose import marks a snippet as visualization code.
    std::set<std::string> visualization_modules = default_visualization_modules();

    static std::set<std::string> default_visualization_modules();
};

// Streams records from a JSON Lines corpus. Malformed lines are skipped and
// counted. Reaching the end without a single parseable record throws
// EmptyCorpusError.
class CorpusReader {
public:
    explicit CorpusReader(const std::filesystem::path& path);

    std::optional<RawRecord> next();
    std::size_t skipped() const noexcept { return skipped_; }
    std::size_t yielded() const noexcept { return yielded_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::set<std::string> seen_ids_;
    std::size_t skipped_ = 0;
    std::size_t yielded_ = 0;
};

struct LoadedCorpus {
    std::vector<RawRecord> records;
    std::size_t skipped = 0;
};

LoadedCorpus load_corpus(const std::filesystem::path& path);

/// Parses one corpus line; nullopt if malformed.
std::optional<RawRecord> parse_corpus_line(std::string_view line);
std::string format_corpus_line(const RawRecord& record);

FilterVerdict basic_filter(const RawRecord& record, const ExecutionOutcome& probe,
                           const FilterConfig& config = FilterConfig{});

/// True if the source imports any module in `modules`.
bool imports_any(std::string_view source, const std::set<std::string>& modules);

/// NoInput and Stdin pass through; FunctionInput appends a statement that
/// prints the call's value. Throws MaterializationError if the call is not a
/// single valid expression.
ExecutableUnit materialize_input(const CodeSnippet& snippet, const InputSpec& input);

}  // namespace codeforge
