#include "codeforge/reward.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "codeforge/corpus.hpp"
#include "codeforge/curation.hpp"
#include "codeforge/errors.hpp"

namespace codeforge {

namespace {

constexpr std::string_view kMaskTagPrefix = "answer_MASKED_LINE_";

std::string_view trim(std::string_view s) {
    auto space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; };
    while (!s.empty() && space(s.front())) s.remove_prefix(1);
    while (!s.empty() && space(s.back())) s.remove_suffix(1);
    return s;
}

std::size_t backtick_prefix(std::string_view line) {
    std::size_t n = 0;
    while (n < line.size() && line[n] == '`') ++n;
    return n;
}

std::string_view strip_one_newline(std::string_view s) {
    if (!s.empty() && s.back() == '\n') s.remove_suffix(1);
    return s;
}

std::optional<std::size_t> mask_id_of(std::string_view tag) {
    if (tag.substr(0, kMaskTagPrefix.size()) != kMaskTagPrefix) return std::nullopt;
    tag.remove_prefix(kMaskTagPrefix.size());
    if (tag.empty() || (tag.size() > 1 && tag[0] == '0')) return std::nullopt;
    std::size_t id = 0;
    const auto [ptr, ec] = std::from_chars(tag.data(), tag.data() + tag.size(), id);
    if (ec != std::errc{} || ptr != tag.data() + tag.size()) return std::nullopt;
    return id;
}

}  // namespace

void RewardConfig::validate() const {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("reward weight w must lie in [0, 1]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("reward weight beta must lie in [0, 1]");
}

std::vector<FencedBlock> fenced_blocks(std::string_view text) {
    std::vector<FencedBlock> blocks;
    std::size_t fence = 0;  // length of the open fence, 0 when outside a block
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        const std::size_t ticks = backtick_prefix(line);
        if (fence == 0) {
            if (ticks >= 3) {
                fence = ticks;
                blocks.push_back({std::string(trim(line.substr(ticks))), {}, false});
            }
            continue;
        }
        const std::string_view content = trim(line);
        if (ticks >= fence && content.size() == ticks) {
            blocks.back().closed = true;
            fence = 0;
            continue;
        }
        blocks.back().body.append(line);
        blocks.back().body += '\n';
    }
    return blocks;
}

ParsedResponse parse_response(std::string_view text, Direction direction,
                              const std::vector<std::size_t>& expected_mask_ids) {
    ParsedResponse parsed;
    const std::vector<FencedBlock> blocks = fenced_blocks(text);
    if (direction == Direction::Forward) {
        const FencedBlock* out = nullptr;
        const FencedBlock* err = nullptr;
        std::size_t n_out = 0;
        std::size_t n_err = 0;
        for (const FencedBlock& b : blocks) {
            if (b.tag == "answer_stdout") ++n_out, out = &b;
            if (b.tag == "answer_stderr") ++n_err, err = &b;
        }
        if (n_out != 1 || n_err != 1 || !out->closed || !err->closed) return parsed;
        parsed.format_ok = true;
        parsed.pred_stdout = out->body;
        parsed.pred_stderr = err->body;
        return parsed;
    }
    std::map<std::size_t, std::string> fills;
    std::map<std::size_t, std::size_t> seen;
    for (const FencedBlock& b : blocks) {
        const auto id = mask_id_of(b.tag);
        if (!id) continue;
        if (!b.closed) return parsed;
        ++seen[*id];
        fills[*id] = b.body;
    }
    if (seen.size() != expected_mask_ids.size()) return parsed;
    for (std::size_t id : expected_mask_ids) {
        const auto it = seen.find(id);
        if (it == seen.end() || it->second != 1) return parsed;
    }
    parsed.format_ok = true;
    parsed.fills = std::move(fills);
    return parsed;
}

int stdout_reward(std::string_view pred, std::string_view gt) {
    return strip_one_newline(pred) == strip_one_newline(gt) ? 1 : 0;
}

double stderr_reward(std::string_view pred, std::string_view gt) {
    const LineSet a = split_lines(pred);
    const LineSet b = split_lines(gt);
    if (a.size() == 0 && b.size() == 0) return 1.0;
    const std::size_t d = structure_distance(a, b);
    // |A u B| = (|A| + |B| + d) / 2 and |A n B| = (|A| + |B| - d) / 2.
    const std::size_t total = a.size() + b.size();
    return static_cast<double>(total - d) / static_cast<double>(total + d);
}

RewardBreakdown combine_reward(int r_format, int r_o, double r_e, const RewardConfig& config) {
    RewardBreakdown out{r_format, r_o, r_e, 0.0};
    if (r_format == 0) return {};
    out.r = config.w * r_format + (1.0 - config.w) * (r_o + config.beta * r_e) / 2.0;
    return out;
}

RewardBreakdown total_reward(const ParsedResponse& parsed, const GroundTruth& gt, const RewardConfig& config) {
    if (!parsed.format_ok) return {};
    return combine_reward(1, stdout_reward(parsed.pred_stdout, gt.gt_stdout),
                          stderr_reward(parsed.pred_stderr, gt.gt_stderr), config);
}

RewardBreakdown score_forward(std::string_view response_text, const TaskInstance& task, const RewardConfig& config) {
    if (task.direction != Direction::Forward) throw Error("task " + task.task_id + " is not a forward task");
    return total_reward(parse_response(response_text, Direction::Forward), task.ground_truth, config);
}

RewardBreakdown score_backward(std::string_view response_text, const TaskInstance& task, const RewardConfig& config,
                               Executor& executor) {
    if (task.direction != Direction::Backward) throw Error("task " + task.task_id + " is not a backward task");
    std::vector<std::size_t> ids;
    for (const MaskEntry& m : task.mask_map) ids.push_back(m.mask_id);
    const ParsedResponse parsed = parse_response(response_text, Direction::Backward, ids);
    if (!parsed.format_ok) return {};

    const std::string completed = fill_placeholders(task.shown_code, parsed.fills);
    const ExecutableUnit unit = materialize_input(CodeSnippet::make(task.task_id, completed), task.input);
    const ExecutionOutcome outcome = executor.run(unit).outcome;
    if (outcome.status == ExecutionStatus::SpawnFailed) {
        throw ScoringError("could not execute completed script for task " + task.task_id);
    }
    const double r_e = stderr_reward(outcome.stderr_text, task.ground_truth.gt_stderr);
    const int r_o = outcome.resource_exceeded() ? 0 : stdout_reward(outcome.stdout_text, task.ground_truth.gt_stdout);
    return combine_reward(1, r_o, r_e, config);
}

RewardBreakdown score_response(std::string_view response_text, const TaskInstance& task, const RewardConfig& config,
                               Executor& executor) {
    return task.direction == Direction::Forward ? score_forward(response_text, task, config)
                                                : score_backward(response_text, task, config, executor);
}

}  // namespace codeforge
