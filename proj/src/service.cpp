#include "codeforge/service.hpp"

#include <httplib.h>

#include <charconv>

#include "codeforge/errors.hpp"
#include "codeforge/parallel.hpp"
#include "codeforge/serialization.hpp"

namespace codeforge {

namespace {

// The sandbox had no free slot and its waiting list was full.
class SandboxBusy : public Error {
public:
    SandboxBusy() : Error("all sandbox slots are busy") {}
};

// Executor view of the pool that refuses instead of queueing past the bound.
class NonBlockingExecutor final : public Executor {
public:
    explicit NonBlockingExecutor(SandboxPool& pool) : pool_(pool) {}

    ExecutionRun run(const ExecutableUnit& unit) override {
        std::optional<ExecutionRun> run = pool_.try_run(unit);
        if (!run) throw SandboxBusy();
        return std::move(*run);
    }
    const ResourceLimits& limits() const override { return pool_.limits(); }

private:
    SandboxPool& pool_;
};

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_header(std::string(kSchemaHeader), std::string(kSchemaVersion));
    res.set_content(dump_line(body), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    reply(res, status, json{{"code", code}, {"message", message}});
}

bool schema_ok(const httplib::Request& req, httplib::Response& res) {
    const std::string key(kSchemaHeader);
    if (!req.has_header(key) || req.get_header_value(key) == kSchemaVersion) return true;
    reply_error(res, 400, "schema_mismatch",
                "this server speaks schema " + std::string(kSchemaVersion) + ", request asked for " +
                    req.get_header_value(key));
    return false;
}

SandboxOptions resolved(SandboxOptions options) {
    options.slots = resolve_threads(options.slots);
    if (options.max_waiting == 0) options.max_waiting = 8 * options.slots;
    return options;
}

}  // namespace

std::pair<std::string, int> parse_bind_address(std::string_view address) {
    const std::size_t colon = address.rfind(':');
    if (colon == std::string_view::npos || colon == 0) throw ConfigError("bind address must be host:port");
    std::string host(address.substr(0, colon));
    if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    const std::string_view port_text = address.substr(colon + 1);
    int port = -1;
    const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535) {
        throw ConfigError("bad port in bind address: " + std::string(address));
    }
    return {host, port};
}

RewardService::RewardService(TaskStore store, ServiceOptions options)
    : store_(std::move(store)),
      options_([&] {
          options.reward.validate();
          options.sandbox = resolved(std::move(options.sandbox));
          return std::move(options);
      }()),
      pool_(options_.sandbox),
      server_(std::make_unique<httplib::Server>()) {
    const std::size_t threads = options_.http_threads != 0
                                    ? options_.http_threads
                                    : options_.sandbox.slots + options_.sandbox.max_waiting + 8;
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    install_routes();
}

RewardService::~RewardService() { stop(); }

void RewardService::install_routes() {
    server_->Get("/health", [this](const httplib::Request& req, httplib::Response& res) {
        if (!schema_ok(req, res)) return;
        reply(res, 200,
              json{{"status", "ok"},
                   {"tasks", store_.size()},
                   {"sandbox_slots", pool_.slot_count()},
                   {"template_hash", prompt_template().hash}});
    });

    server_->Get(R"(/tasks/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        if (!schema_ok(req, res)) return;
        const std::string id = req.matches[1];
        const TaskInstance* task = store_.find(id);
        if (task == nullptr) {
            reply_error(res, 404, "task_not_found", "no task with id " + id);
            return;
        }
        reply(res, 200, public_task_json(*task));
    });

    server_->Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
        if (!schema_ok(req, res)) return;
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded()) {
            reply_error(res, 400, "bad_request", "body is not valid JSON");
            return;
        }
        ScoreRequest request;
        try {
            request = ScoreRequest::from_json(body);
        } catch (const Error& e) {
            reply_error(res, 400, "bad_request", e.what());
            return;
        }
        NonBlockingExecutor executor(pool_);
        try {
            const ScoreResult result = score_request(store_, request, options_.reward, executor);
            if (!result.reward) {
                reply_error(res, 404, result.error_code, result.error_message);
                return;
            }
            ++scored_;
            reply(res, 200, result.to_json());
        } catch (const SandboxBusy& e) {
            ++rejected_busy_;
            res.set_header("Retry-After", "1");
            reply_error(res, 429, "sandbox_busy", e.what());
        } catch (const ScoringError& e) {
            reply_error(res, 503, "scoring_failed", e.what());
        }
    });

    server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        reply_error(res, 500, "internal_error", message);
    });

    server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 404) {
            reply_error(res, 404, "not_found", "no such endpoint");
        } else {
            reply_error(res, res.status, "http_error", "request failed with status " + std::to_string(res.status));
        }
    });
}

int RewardService::bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void RewardService::serve() { server_->listen_after_bind(); }

void RewardService::wait_until_ready() const { server_->wait_until_ready(); }

void RewardService::stop() {
    if (server_) server_->stop();
}

}  // namespace codeforge
