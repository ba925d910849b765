#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "codeforge/augmentor.hpp"
#include "codeforge/sandbox.hpp"
#include "codeforge/taskgen.hpp"

namespace codeforge {

struct RewardConfig {
    double w = 0.1;     // weight of the format term
    double beta = 0.5;  // weight of the stderr term

    /// Requires w and beta in [0, 1] so that every reward stays in [0, 1].
    void validate() const;
};

struct ParsedResponse {
    bool format_ok = false;
    std::string pred_stdout;
    std::string pred_stderr;
    std::map<std::size_t, std::string> fills;  // backward: mask id -> replacement line(s)
};

struct RewardBreakdown {
    int r_format = 0;
    int r_o = 0;
    double r_e = 0.0;
    double r = 0.0;

    bool operator==(const RewardBreakdown&) const = default;
};

struct FencedBlock {
    std::string tag;   // info string right after the opening fence
    std::string body;  // every line between the fences, each ending in '\n'
    bool closed = true;
};

/// Fenced blocks in order of appearance. A block opens on a line that starts
/// with three or more backticks and closes on a line holding only a backtick
/// run at least as long.
std::vector<FencedBlock> fenced_blocks(std::string_view text);

/// Forward: exactly one closed `answer_stdout` and one `answer_stderr` block.
/// Backward: exactly one closed `answer_MASKED_LINE_<id>` block for each
/// expected id and none for other ids.
ParsedResponse parse_response(std::string_view text, Direction direction,
                              const std::vector<std::size_t>& expected_mask_ids = {});

/// 1 iff equal once at most one trailing newline is removed from each side.
int stdout_reward(std::string_view pred, std::string_view gt);

/// Jaccard similarity of the two stderr line sets; 1 when both are empty.
double stderr_reward(std::string_view pred, std::string_view gt);

RewardBreakdown combine_reward(int r_format, int r_o, double r_e, const RewardConfig& config);

/// A failed format zeroes every component.
RewardBreakdown total_reward(const ParsedResponse& parsed, const GroundTruth& gt, const RewardConfig& config);

/// Compares predictions against the stored ground truth; never executes.
RewardBreakdown score_forward(std::string_view response_text, const TaskInstance& task, const RewardConfig& config);

/// Substitutes the fills, runs the completed script once with the task's
/// input, and scores the captured streams. A response that fails the format
/// check scores 0 without running. Throws ScoringError if the executor
/// cannot run the script at all.
RewardBreakdown score_backward(std::string_view response_text, const TaskInstance& task, const RewardConfig& config,
                               Executor& executor);

/// Dispatches on the task direction.
RewardBreakdown score_response(std::string_view response_text, const TaskInstance& task, const RewardConfig& config,
                               Executor& executor);

}  // namespace codeforge
