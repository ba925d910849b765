#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "codeforge/corpus.hpp"
#include "codeforge/random.hpp"
#include "codeforge/sandbox.hpp"

namespace codeforge {

namespace python {
class SyntaxTree;
}

enum class ErrorClass { None, Syntax, Logical, Unsupported };

std::string_view to_string(ErrorClass c);  // "none" / "syntax" / "logical" / "unsupported"
ErrorClass error_class_from_string(std::string_view text);

/// None for a clean run with empty stderr; otherwise by the name of the
/// final error line: SyntaxError, the six logical names, or Unsupported.
ErrorClass classify_error(std::string_view stderr_text, bool exit_clean);

struct AugmentationPolicy {
    bool digit_enabled = true;
    bool logical_enabled = true;
    double digit_prob = 0.3;
    std::size_t max_logical_edits = 2;
    std::set<ErrorClass> allowed_error_classes{ErrorClass::None, ErrorClass::Syntax, ErrorClass::Logical};
    /// Chance of replacing the logical edits with one syntax-breaking edit;
    /// only used while Syntax is allowed.
    double syntax_break_prob = 0.15;
    std::uint64_t rng_seed = 17;

    void validate() const;
};

enum class EditKind { Digit, Operator, Condition, SyntaxBreak };

std::string_view to_string(EditKind kind);
EditKind edit_kind_from_string(std::string_view text);

// One replacement of `before` by `after` at byte `offset` of the parent text
// named by `target` ("source", or "input:<k>" for the k-th input value).
struct Edit {
    EditKind kind = EditKind::Digit;
    std::string target = "source";
    std::size_t offset = 0;
    std::string before;
    std::string after;

    bool operator==(const Edit&) const = default;
};

/// Applies edits whose offsets refer to `parent`. Spans must not overlap and
/// each `before` must match the parent; otherwise throws Error.
std::string apply_edits(std::string_view parent, std::vector<Edit> edits);

struct TextMutation {
    std::string text;
    std::vector<Edit> edits;
};

/// Mutates digits inside numeric literals of snippet-language code, keeping
/// every literal valid. Throws ParseError if the code does not tokenize.
TextMutation augment_code_digits(std::string_view code, double prob, Rng& rng, std::string_view target = "source");

/// Mutates digits of free-form input text, skipping digits that touch a
/// letter or underscore (identifiers such as `x1`).
TextMutation augment_text_digits(std::string_view text, double prob, Rng& rng, std::string_view target);

/// Seeded convenience form over code, using policy.digit_prob and policy.rng_seed.
TextMutation augment_digits(std::string_view code, const AugmentationPolicy& policy);

/// Every logical mutation available in the tree, one edit group per site.
/// A condition toggle is one site with two edits.
std::vector<std::vector<Edit>> logical_mutation_sites(const python::SyntaxTree& tree);

struct LogicalMutation {
    CodeSnippet snippet;
    std::vector<Edit> edits;
    std::size_t sites_available = 0;  // 0 means nothing could be mutated
};

/// Picks min(max_logical_edits, sites) sites uniformly and rewrites them.
/// Throws ParseError for unparseable input.
LogicalMutation augment_logical(const CodeSnippet& snippet, const AugmentationPolicy& policy, Rng& rng);
LogicalMutation augment_logical(const CodeSnippet& snippet, const AugmentationPolicy& policy);

/// Candidate edits that delete a block colon or a parenthesis.
std::vector<Edit> syntax_break_sites(std::string_view source);

struct AugmentedSample {
    CodeSnippet snippet;
    std::vector<InputSpec> inputs;
    std::vector<Edit> edit_log;
    std::string parent_id;
};

/// Rebuilds a child from its parent record and edit log.
RawRecord replay_edits(const RawRecord& parent, const std::vector<Edit>& edit_log);

struct GroundTruth {
    std::string gt_stdout;
    std::string gt_stderr;
    ErrorClass error_class = ErrorClass::None;

    bool operator==(const GroundTruth&) const = default;
};

struct PreparedSample {
    AugmentedSample sample;
    ExecutionOutcome outcome;
    EnvironmentInfo env;
    ErrorClass error_class = ErrorClass::None;

    GroundTruth ground_truth() const { return {outcome.stdout_text, outcome.stderr_text, error_class}; }
    /// The unit that produced the ground truth (first input, materialized).
    ExecutableUnit unit() const;
};

enum class RejectReason { UnsupportedError, ResourceExceeded, NoMutationSite };

std::string_view to_string(RejectReason reason);

struct PrepareResult {
    std::optional<PreparedSample> accepted;
    RejectReason reason = RejectReason::UnsupportedError;  // meaningful when !accepted
};

/// Augments, executes the first materialized input, and gates on the error
/// taxonomy and resource limits. Throws InfrastructureError if the executor
/// cannot spawn the interpreter.
PrepareResult prepare_training_sample(const RawRecord& record, const AugmentationPolicy& policy, Executor& executor);

}  // namespace codeforge
