#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "codeforge/augmentor.hpp"
#include "codeforge/corpus.hpp"
#include "codeforge/curation.hpp"
#include "codeforge/errors.hpp"
#include "codeforge/reward.hpp"
#include "codeforge/sandbox.hpp"
#include "codeforge/serialization.hpp"
#include "codeforge/taskgen.hpp"

namespace codeforge {

// A pipeline stage failed for infrastructure reasons. Per-record rejections
// never raise this.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error(stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct PipelineConfig {
    std::vector<std::filesystem::path> corpus_paths;
    std::filesystem::path output_dir = "codeforge-out";
    std::uint64_t seed = 17;
    FilterConfig filter;
    CurationConfig curation;  // rng_seed defaults to `seed`
    AugmentationPolicy augmentation;  // rng_seed defaults to `seed`
    TaskMix mix;
    std::uint64_t task_seed = 17;  // defaults to `seed`
    RewardConfig reward;
    ResourceLimits limits = ResourceLimits::from_environment();
    InterpreterProfile interpreter = InterpreterProfile::from_environment();
    std::size_t sandbox_slots = 0;  // 0: logical CPU count
    std::size_t threads = 0;        // 0: logical CPU count
    /// Timestamp shown to the model; "system" uses the wall clock.
    std::string clock = "2025-01-01T00:00:00Z";

    void validate() const;

    /// Strict: unknown keys are a ConfigError. Relative paths resolve against
    /// `base_dir`.
    static PipelineConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
    json to_json() const;

    SandboxOptions sandbox_options() const;
};

/// "syntax,logical" -> {None, Syntax, Logical}. A clean run is always allowed.
std::set<ErrorClass> parse_error_classes(std::string_view text);

Clock make_clock(std::string_view setting);

using Histogram = std::map<std::string, std::size_t>;

struct IngestReport {
    std::vector<RawRecord> kept;
    std::size_t read = 0;
    std::size_t malformed = 0;  // unparseable lines and repeated ids
    Histogram rejections;       // by filter reason
};

/// Loads every corpus, probes each record with its first input and applies
/// the basic filters. Records too short to keep are not executed.
IngestReport ingest_corpora(const std::vector<std::filesystem::path>& corpora, const FilterConfig& filter,
                            Executor& executor, std::size_t threads = 0);

/// Writes records in corpus line format, one per line.
void write_corpus(const std::filesystem::path& path, const std::vector<RawRecord>& records);

/// Curates whole records; inputs travel with their snippet.
std::vector<RawRecord> curate_records(const std::vector<RawRecord>& records, const CurationConfig& config,
                                      CurationStats* stats = nullptr);

struct AugmentReport {
    std::vector<PreparedSample> samples;
    Histogram rejections;  // by reject reason
};

AugmentReport augment_records(const std::vector<RawRecord>& records, const AugmentationPolicy& policy,
                              Executor& executor, std::size_t threads = 0);

struct StageSummary {
    std::string name;
    std::size_t input_n = 0;
    std::size_t output_n = 0;
    Histogram rejections;
    std::string output;  // artifact file name inside the output directory
    json extra = json::object();
};

struct Manifest {
    std::vector<StageSummary> stages;
    std::map<std::string, std::uint64_t> seeds;
    std::string template_version;
    std::string template_hash;

    json to_json() const;
};

/// ingest -> curate -> augment -> tasks. Each stage writes a JSON Lines
/// artifact to the output directory, followed by manifest.json.
Manifest run_pipeline(const PipelineConfig& config);
Manifest run_pipeline(const PipelineConfig& config, Executor& executor);

struct ScoreRequest {
    std::string task_id;
    std::string response_text;
    std::optional<std::string> group_id;

    /// Throws Error when fields are missing or mistyped.
    static ScoreRequest from_json(const json& j);
};

struct ScoreResult {
    std::string task_id;
    std::optional<std::string> group_id;
    std::optional<RewardBreakdown> reward;
    std::string error_code;  // set when reward is absent
    std::string error_message;

    json to_json() const;
};

// Immutable lookup of tasks by id.
class TaskStore {
public:
    explicit TaskStore(std::vector<TaskInstance> tasks);
    static TaskStore load(const std::filesystem::path& path);

    const TaskInstance* find(const std::string& task_id) const;
    std::size_t size() const noexcept { return tasks_.size(); }
    const std::vector<TaskInstance>& tasks() const noexcept { return tasks_; }

private:
    std::vector<TaskInstance> tasks_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Scores one request. Unknown task ids produce an error result; scoring
/// infrastructure failures propagate as ScoringError.
ScoreResult score_request(const TaskStore& store, const ScoreRequest& request, const RewardConfig& config,
                          Executor& executor);

/// Results are in request order regardless of thread count.
std::vector<ScoreResult> score_batch(const TaskStore& store, const std::vector<ScoreRequest>& requests,
                                     const RewardConfig& config, Executor& executor, std::size_t threads = 0);

}  // namespace codeforge
