#pragma once

// JSON shapes of the pipeline artifacts. Every artifact file is JSON Lines
// with one object per line and keys in sorted order. Wall-clock durations are
// never written, so artifacts are reproducible byte for byte.

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "codeforge/augmentor.hpp"
#include "codeforge/corpus.hpp"
#include "codeforge/reward.hpp"
#include "codeforge/sandbox.hpp"
#include "codeforge/taskgen.hpp"

namespace codeforge {

using json = nlohmann::json;

json to_json(const InputSpec& input);
InputSpec input_from_json(const json& j);

json to_json(const ExecutionOutcome& outcome);
ExecutionOutcome outcome_from_json(const json& j);

json to_json(const EnvironmentInfo& env);
EnvironmentInfo environment_from_json(const json& j);

json to_json(const Edit& edit);
Edit edit_from_json(const json& j);

json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const json& j);

json to_json(const PreparedSample& sample);
PreparedSample prepared_sample_from_json(const json& j);

json to_json(const TaskInstance& task);
TaskInstance task_from_json(const json& j);

/// The model-visible view of a task: no ground truth and no mask map.
json public_task_json(const TaskInstance& task);

json to_json(const RewardBreakdown& reward);

/// Compact single-line form; invalid UTF-8 is replaced rather than thrown.
std::string dump_line(const json& j);

/// Parses every non-blank line. Throws IoError if the file cannot be read and
/// Error naming the line for malformed JSON.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view text);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

std::vector<PreparedSample> read_samples(const std::filesystem::path& path);
std::vector<TaskInstance> read_tasks(const std::filesystem::path& path);

}  // namespace codeforge
