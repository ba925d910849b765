#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "codeforge/augmentor.hpp"
#include "codeforge/corpus.hpp"
#include "codeforge/sandbox.hpp"

namespace codeforge {

enum class Direction { Forward, Backward };

std::string_view to_string(Direction direction);  // "forward" / "backward"
Direction direction_from_string(std::string_view text);

struct MaskEntry {
    std::size_t mask_id = 0;
    std::string original_line;  // full line, indentation included, no newline
    std::size_t line_index = 0;  // 0-based line of the source

    bool operator==(const MaskEntry&) const = default;
};

struct MaskedSource {
    std::string text;
    std::vector<MaskEntry> mask_map;  // ascending mask_id, document order
};

std::string placeholder_token(std::size_t mask_id);  // "MASKED_LINE_<id>"

/// Most lines that may be masked in `source`: min(3, floor(0.3 x non-blank
/// lines), eligible lines). Zero when the source cannot be masked.
std::size_t max_mask_count(std::string_view source);

/// Replaces `count` distinct single-line statements with indented
/// placeholders. Throws MaskingError if count is out of range or the source
/// has no maskable lines.
MaskedSource mask_lines(const CodeSnippet& snippet, std::size_t count, std::uint64_t rng_seed);

/// Puts each entry's original line back in place of its placeholder.
std::string unmask(std::string_view masked, const std::vector<MaskEntry>& mask_map);

/// Substitutes fills for placeholders. A fill that does not start with
/// whitespace takes the placeholder's indentation on each of its lines; one
/// trailing newline is dropped. Throws MaskingError for a missing fill.
std::string fill_placeholders(std::string_view masked, const std::map<std::size_t, std::string>& fills);

struct PromptTemplate {
    std::string version;
    std::string forward;
    std::string backward;
    std::string hash;  // hex SHA-256 over version and both bodies
};

/// The template shipped with this build.
const PromptTemplate& prompt_template();

std::string sha256_hex(std::string_view data);

/// Replaces each `{{name}}` with vars[name]. Substituted values are not
/// rescanned. Throws RenderError for a name missing from `vars` or an
/// unterminated `{{`.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& vars);

/// A fenced block whose fence is longer than any backtick run in `body`.
std::string fenced(std::string_view info, std::string_view body);

std::string render_inputs(const InputSpec& input);

struct TaskInstance {
    std::string task_id;
    Direction direction = Direction::Forward;
    std::string prompt_text;
    std::string shown_code;
    InputSpec input;
    std::string inputs_shown;
    EnvironmentInfo env;
    GroundTruth ground_truth;
    std::vector<MaskEntry> mask_map;
    std::string template_version;
    std::string template_hash;

    bool operator==(const TaskInstance&) const = default;
};

/// Renders the prompt for a task whose other fields are populated.
std::string render_prompt(const TaskInstance& task);

TaskInstance build_forward_task(const AugmentedSample& sample, const GroundTruth& gt, const EnvironmentInfo& env);
TaskInstance build_backward_task(const AugmentedSample& sample, const GroundTruth& gt, const EnvironmentInfo& env,
                                 std::size_t count, std::uint64_t rng_seed);

struct TaskMix {
    double forward = 0.5;
    double backward = 0.5;

    /// Parses "forward=0.5,backward=0.5". Throws ConfigError.
    static TaskMix parse(std::string_view text);
    void validate() const;
    std::string format() const;
};

struct TaskGenStats {
    std::size_t forward = 0;
    std::size_t backward = 0;
    std::size_t backward_fallbacks = 0;  // backward drawn but nothing could be masked
};

/// One task per prepared sample. The direction and the mask are drawn from
/// streams derived from `seed` and the sample id.
TaskInstance generate_task(const PreparedSample& prepared, const TaskMix& mix, std::uint64_t seed,
                           bool* fell_back = nullptr);
std::vector<TaskInstance> generate_tasks(const std::vector<PreparedSample>& samples, const TaskMix& mix,
                                         std::uint64_t seed, TaskGenStats* stats = nullptr, std::size_t threads = 0);

}  // namespace codeforge
