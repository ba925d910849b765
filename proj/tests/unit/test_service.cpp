#include <doctest.h>
#include <httplib.h>

#include <future>
#include <thread>

#include "codeforge/service.hpp"

using namespace codeforge;

namespace {

const EnvironmentInfo kEnv{"project/\nproject/main.py\n", "project/main.py", "cd project && python3 main.py",
                           "2025-01-01T00:00:00Z"};

constexpr const char* kSlowSource =
    "import time\n"
    "time.sleep(0.4)\n"
    "a = 1\n"
    "b = 2\n"
    "c = a + b\n"
    "d = c * 2\n"
    "e = d - 1\n"
    "print(a, b)\n"
    "print(c, d)\n"
    "print(e)\n";

TaskStore make_store() {
    AugmentedSample fwd{CodeSnippet::make("p", "print('x')\n"), {}, {}, "p"};
    AugmentedSample slow{CodeSnippet::make("s", kSlowSource), {}, {}, "s"};
    return TaskStore({build_forward_task(fwd, {"x\n", "", ErrorClass::None}, kEnv),
                      build_backward_task(slow, {"1 2\n3 6\n5\n", "", ErrorClass::None}, kEnv, 1, 3)});
}

std::string backward_answer(const TaskInstance& task) {
    std::string text;
    for (const MaskEntry& m : task.mask_map) {
        text += "```answer_" + placeholder_token(m.mask_id) + "\n" + m.original_line + "\n```\n";
    }
    return text;
}

// Runs a service on a free loopback port for the lifetime of the object.
class RunningService {
public:
    explicit RunningService(ServiceOptions options) : service_(make_store(), std::move(options)) {
        port_ = service_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { service_.serve(); });
        service_.wait_until_ready();
    }
    ~RunningService() {
        service_.stop();
        thread_.join();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30, 0);
        return c;
    }
    RewardService& service() { return service_; }

private:
    RewardService service_;
    int port_ = 0;
    std::thread thread_;
};

ServiceOptions options(std::size_t slots, std::size_t max_waiting) {
    ServiceOptions o;
    o.sandbox.slots = slots;
    o.sandbox.max_waiting = max_waiting;
    o.sandbox.limits.timeout = std::chrono::seconds(5);
    return o;
}

json body_of(const httplib::Result& r) {
    REQUIRE(r);
    return json::parse(r->body);
}

}  // namespace

TEST_SUITE("service") {
    TEST_CASE("bind addresses") {
        CHECK(parse_bind_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
        CHECK(parse_bind_address("[::1]:0") == std::pair<std::string, int>{"::1", 0});
        CHECK_THROWS_AS(parse_bind_address("localhost"), ConfigError);
        CHECK_THROWS_AS(parse_bind_address(":80"), ConfigError);
        CHECK_THROWS_AS(parse_bind_address("h:99999"), ConfigError);
        CHECK_THROWS_AS(parse_bind_address("h:8x"), ConfigError);
    }

    TEST_CASE("health and task lookup") {
        RunningService s(options(2, 4));
        auto c = s.client();

        const auto health = c.Get("/health");
        REQUIRE(health);
        CHECK(health->status == 200);
        CHECK(health->get_header_value(std::string(kSchemaHeader)) == kSchemaVersion);
        CHECK(body_of(health).at("tasks") == 2);

        const auto task = c.Get("/tasks/s:bwd");
        REQUIRE(task);
        CHECK(task->status == 200);
        const json view = body_of(task);
        CHECK(view.at("task_id") == "s:bwd");
        CHECK_FALSE(view.contains("hidden"));
        CHECK(task->body.find("time.sleep(0.4)") != std::string::npos);
        CHECK(task->body.find("\"1 2\\n3 6\\n5\\n\"") == std::string::npos);

        const auto missing = c.Get("/tasks/nope");
        REQUIRE(missing);
        CHECK(missing->status == 404);
        CHECK(body_of(missing).at("code") == "task_not_found");
        CHECK(body_of(missing).contains("message"));

        const auto unknown = c.Get("/elsewhere");
        REQUIRE(unknown);
        CHECK(unknown->status == 404);
        CHECK(body_of(unknown).at("code") == "not_found");
    }

    TEST_CASE("score requests match batch scoring") {
        RunningService s(options(2, 4));
        auto c = s.client();
        const TaskStore store = make_store();
        const std::vector<ScoreRequest> requests{
            {"p:fwd", "```answer_stdout\nx\n```\n```answer_stderr\n```\n", "g"},
            {"p:fwd", "```answer_stdout\ny\n```\n```answer_stderr\n```\n", std::nullopt},
            {"s:bwd", backward_answer(*store.find("s:bwd")), std::nullopt},
            {"s:bwd", "no blocks", std::nullopt},
        };
        SandboxPool pool(SandboxOptions{.slots = 2});
        const auto expected = score_batch(store, requests, RewardConfig{}, pool, 2);

        for (std::size_t i = 0; i < requests.size(); ++i) {
            json req{{"task_id", requests[i].task_id}, {"response_text", requests[i].response_text}};
            if (requests[i].group_id) req["group_id"] = *requests[i].group_id;
            const auto r = c.Post("/score", req.dump(), "application/json");
            REQUIRE(r);
            CHECK(r->status == 200);
            CHECK(json::parse(r->body) == expected[i].to_json());
        }
        CHECK(expected[0].reward->r == doctest::Approx(0.775).epsilon(1e-12));
        CHECK(expected[2].reward->r == doctest::Approx(0.775).epsilon(1e-12));
        CHECK(s.service().scored() == 4);
    }

    TEST_CASE("malformed score requests") {
        RunningService s(options(1, 1));
        auto c = s.client();

        auto r = c.Post("/score", "{not json", "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);
        CHECK(body_of(r).at("code") == "bad_request");

        r = c.Post("/score", R"({"task_id":"p:fwd"})", "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);

        r = c.Post("/score", R"({"task_id":"zzz","response_text":""})", "application/json");
        REQUIRE(r);
        CHECK(r->status == 404);
        CHECK(body_of(r).at("code") == "task_not_found");

        const httplib::Headers wrong{{std::string(kSchemaHeader), "2"}};
        r = c.Post("/score", wrong, R"({"task_id":"p:fwd","response_text":""})", "application/json");
        REQUIRE(r);
        CHECK(r->status == 400);
        CHECK(body_of(r).at("code") == "schema_mismatch");

        const httplib::Headers right{{std::string(kSchemaHeader), "1"}};
        r = c.Post("/score", right, R"({"task_id":"p:fwd","response_text":""})", "application/json");
        REQUIRE(r);
        CHECK(r->status == 200);
        CHECK(body_of(r).at("r") == 0.0);
    }

    TEST_CASE("saturated sandbox answers 429 instead of queueing") {
        RunningService s(options(1, 1));
        const TaskStore store = make_store();
        const std::string body =
            json{{"task_id", "s:bwd"}, {"response_text", backward_answer(*store.find("s:bwd"))}}.dump();

        constexpr int kRequests = 8;
        std::vector<std::future<int>> statuses;
        for (int i = 0; i < kRequests; ++i) {
            statuses.push_back(std::async(std::launch::async, [&] {
                auto c = s.client();
                const auto r = c.Post("/score", body, "application/json");
                if (!r) return -1;
                if (r->status == 429) {
                    const json j = json::parse(r->body);
                    if (j.at("code") != "sandbox_busy" || r->get_header_value("Retry-After").empty()) return -2;
                }
                return r->status;
            }));
        }
        int ok = 0;
        int busy = 0;
        for (auto& f : statuses) {
            const int status = f.get();
            CHECK((status == 200 || status == 429));
            ok += status == 200;
            busy += status == 429;
        }
        CHECK(ok >= 1);
        CHECK(busy >= 1);
        CHECK(s.service().rejected_busy() == static_cast<std::size_t>(busy));
    }
}
