#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace codeforge {

struct ResourceLimits {
    std::chrono::milliseconds timeout{5000};
    std::uint64_t memory_cap = 8ULL << 30;       // address-space bytes
    std::size_t max_output_bytes = 1U << 20;      // per stream

    /// Defaults overridden by CODEFORGE_TIMEOUT_SECS / CODEFORGE_MEM_BYTES.
    static ResourceLimits from_environment();
    void validate() const;
};

enum class ExecutionStatus { Clean, NonzeroExit, Timeout, MemoryKilled, OutputTruncated, SpawnFailed };

std::string_view to_string(ExecutionStatus status);
ExecutionStatus execution_status_from_string(std::string_view text);

struct ExecutionOutcome {
    std::string stdout_text;
    std::string stderr_text;
    ExecutionStatus status = ExecutionStatus::SpawnFailed;
    std::chrono::duration<double> wall_time{0};
    std::optional<int> exit_code;

    bool clean() const { return status == ExecutionStatus::Clean; }
    bool resource_exceeded() const {
        return status == ExecutionStatus::Timeout || status == ExecutionStatus::MemoryKilled ||
               status == ExecutionStatus::OutputTruncated;
    }
};

struct EnvironmentInfo {
    std::string project_tree;
    std::string snippet_path;
    std::string run_command;
    std::string timestamp;

    bool operator==(const EnvironmentInfo&) const = default;
};

/// How snippets are laid out and launched. The designated file is
/// `project/main.<extension>`, run as `cd project && <command> main.<extension>`.
struct InterpreterProfile {
    std::vector<std::string> command{"python3"};
    std::string extension = "py";

    /// Reads CODEFORGE_INTERP (whitespace-separated command line) if set.
    static InterpreterProfile from_environment();

    std::string file_name() const { return "main." + extension; }
    std::string snippet_path() const { return "project/" + file_name(); }
    std::string run_command() const;
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

Clock system_clock();
Clock fixed_clock(std::chrono::system_clock::time_point instant);
/// ISO-8601 UTC with second precision, e.g. 2025-08-01T12:00:00Z.
std::string format_timestamp(std::chrono::system_clock::time_point instant);
std::chrono::system_clock::time_point parse_timestamp(std::string_view text);

/// Runs `source` under the interpreter inside `workdir`. Snippet-level
/// failures are encoded in the returned status; only an inability to write
/// the file or spawn the interpreter yields SpawnFailed.
ExecutionOutcome execute(std::string_view source, std::string_view stdin_text, const ResourceLimits& limits,
                         const std::filesystem::path& workdir,
                         const InterpreterProfile& interpreter = InterpreterProfile{});

/// Name of the error on the last non-empty stderr line: the text before the
/// first ':' ("ZeroDivisionError" for "ZeroDivisionError: division by zero").
std::string final_error_name(std::string_view stderr_text);

/// Throws IoError if `workdir` cannot be read.
EnvironmentInfo snapshot_environment(const std::filesystem::path& workdir, std::string_view snippet_path,
                                     const Clock& clock, const InterpreterProfile& interpreter = InterpreterProfile{});

struct ExecutableUnit {
    std::string source_text;
    std::string stdin_text;

    bool operator==(const ExecutableUnit&) const = default;
};

struct ExecutionRun {
    ExecutionOutcome outcome;
    EnvironmentInfo env;
};

/// Something that can run an executable unit: the sandbox pool in
/// production, counting or canned fakes in tests.
class Executor {
public:
    virtual ~Executor() = default;
    virtual ExecutionRun run(const ExecutableUnit& unit) = 0;
    virtual const ResourceLimits& limits() const = 0;
};

struct SandboxOptions {
    std::size_t slots = 0;        // 0: logical CPU count
    std::size_t max_waiting = 0;  // 0: 8 x slots
    ResourceLimits limits{};
    InterpreterProfile interpreter{};
    Clock clock = system_clock();
    std::filesystem::path root;  // empty: fresh directory under the system temp dir
};

// Bounded pool of execution slots, each with a private workdir. Safe for
// concurrent callers.
class SandboxPool final : public Executor {
public:
    explicit SandboxPool(SandboxOptions options = {});
    ~SandboxPool() override;
    SandboxPool(const SandboxPool&) = delete;
    SandboxPool& operator=(const SandboxPool&) = delete;

    /// Blocks until a slot is free.
    ExecutionRun run(const ExecutableUnit& unit) override;
    /// Like run(), but returns nullopt instead of queueing when max_waiting
    /// callers are already blocked.
    std::optional<ExecutionRun> try_run(const ExecutableUnit& unit);

    const ResourceLimits& limits() const override { return options_.limits; }
    std::size_t slot_count() const { return options_.slots; }

private:
    std::optional<std::size_t> acquire(bool bounded);
    ExecutionRun run_acquired(std::size_t slot, const ExecutableUnit& unit);
    void release(std::size_t slot);
    ExecutionRun run_in_slot(std::size_t slot, const ExecutableUnit& unit);

    SandboxOptions options_;
    bool owns_root_ = false;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<bool> busy_;
    std::size_t waiting_ = 0;
};

}  // namespace codeforge
