#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>

#include "codeforge/orchestrator.hpp"
#include "codeforge/reward.hpp"
#include "codeforge/sandbox.hpp"

namespace httplib {
class Server;
}

namespace codeforge {

inline constexpr std::string_view kSchemaHeader = "X-Codeforge-Schema";
inline constexpr std::string_view kSchemaVersion = "1";

struct ServiceOptions {
    RewardConfig reward;
    SandboxOptions sandbox;
    /// Connection worker threads; 0 picks enough to answer every waiting
    /// caller: sandbox slots plus the pool's waiting bound plus headroom.
    std::size_t http_threads = 0;
};

// HTTP front end for reward scoring:
//   POST /score        {task_id, response_text, group_id?} -> reward breakdown
//   GET  /tasks/{id}   model-visible task view, no ground truth
//   GET  /health
// Errors are {"code", "message"} bodies. Backward scoring that finds the
// sandbox saturated answers 429 instead of queueing without bound.
class RewardService {
public:
    RewardService(TaskStore store, ServiceOptions options);
    ~RewardService();
    RewardService(const RewardService&) = delete;
    RewardService& operator=(const RewardService&) = delete;

    /// Binds host:port (port 0 picks a free one) and returns the bound port.
    /// Throws Error when binding fails.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. Requires a successful bind().
    void serve();
    /// Blocks until serve() accepts connections or has exited.
    void wait_until_ready() const;
    void stop();

    const TaskStore& store() const noexcept { return store_; }
    std::size_t scored() const noexcept { return scored_.load(); }
    std::size_t rejected_busy() const noexcept { return rejected_busy_.load(); }

private:
    void install_routes();

    TaskStore store_;
    ServiceOptions options_;
    SandboxPool pool_;
    std::unique_ptr<httplib::Server> server_;
    std::atomic<std::size_t> scored_{0};
    std::atomic<std::size_t> rejected_busy_{0};
};

/// Splits "host:port". Throws ConfigError on a malformed address.
std::pair<std::string, int> parse_bind_address(std::string_view address);

}  // namespace codeforge
