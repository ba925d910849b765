#pragma once

#include <atomic>
#include <functional>

#include "codeforge/sandbox.hpp"

namespace codeforge::test {

// Executor that never spawns anything: returns whatever `respond` produces
// and counts calls.
class FakeExecutor final : public Executor {
public:
    using Responder = std::function<ExecutionOutcome(const ExecutableUnit&)>;

    explicit FakeExecutor(Responder respond) : respond_(std::move(respond)) {}

    ExecutionRun run(const ExecutableUnit& unit) override {
        ++calls;
        last_unit = unit;
        ExecutionRun r;
        r.outcome = respond_(unit);
        r.env = EnvironmentInfo{"project/\nproject/main.py\n", "project/main.py", "cd project && python3 main.py",
                                "2025-01-01T00:00:00Z"};
        return r;
    }
    const ResourceLimits& limits() const override { return limits_; }

    std::atomic<int> calls{0};
    ExecutableUnit last_unit;

private:
    Responder respond_;
    ResourceLimits limits_;
};

inline ExecutionOutcome outcome(ExecutionStatus status, std::string out, std::string err,
                                std::optional<int> code = std::nullopt) {
    ExecutionOutcome o;
    o.status = status;
    o.stdout_text = std::move(out);
    o.stderr_text = std::move(err);
    o.exit_code = code ? code : (status == ExecutionStatus::Clean ? std::optional<int>(0) : std::nullopt);
    return o;
}

}  // namespace codeforge::test
