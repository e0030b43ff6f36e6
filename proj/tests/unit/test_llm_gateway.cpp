#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dnaeval/llm_gateway.hpp"
#include "fixtures.hpp"

using namespace dnaeval;
using json = nlohmann::json;

namespace {

CompletionRequest request(const std::string& prompt) { return {"m", prompt, 0.0, 64}; }

std::shared_ptr<MockBackend> mock(const std::string& json_text) {
    return std::make_shared<MockBackend>(MockScript::from_json_text(json_text));
}

class FlakyBackend : public Backend {
public:
    explicit FlakyBackend(int failures) : failures_(failures) {}
    BackendReply fetch(const CompletionRequest&) override {
        if (calls_++ < failures_) throw TransientProviderError("busy");
        return {"ok", 3, 1};
    }
    std::string name() const override { return "flaky"; }
    int calls() const { return calls_; }

private:
    int failures_;
    std::atomic<int> calls_{0};
};

class SlowBackend : public Backend {
public:
    BackendReply fetch(const CompletionRequest& r) override {
        const int now = ++active_;
        int seen = peak_.load();
        while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        --active_;
        ++calls_;
        return {r.prompt_text, 1, 1};
    }
    std::string name() const override { return "slow"; }
    std::atomic<int> active_{0}, peak_{0}, calls_{0};
};

// Local chat-completions server that fails `fail_first` times with the given status.
class FakeProvider {
public:
    FakeProvider(int fail_first, int fail_status) : fail_first_(fail_first), fail_status_(fail_status) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth_ = req.get_header_value("Authorization");
            last_body_ = req.body;
            if (hits_++ < fail_first_) {
                res.status = fail_status_;
                res.set_content("{}", "application/json");
                return;
            }
            const auto body = json::parse(req.body);
            json reply = {{"choices", json::array({{{"message", {{"role", "assistant"},
                                                                   {"content", "echo: " + body["messages"][1]["content"].get<std::string>()}}}}})},
                          {"usage", {{"prompt_tokens", 17}, {"completion_tokens", 5}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeProvider() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int hits() const { return hits_; }
    std::string last_auth_, last_body_;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    int fail_first_, fail_status_;
    std::atomic<int> hits_{0};
};

}  // namespace

TEST(CacheKey, DependsOnEveryField) {
    const auto base = cache_key({"m", "p", 0.0, 10});
    EXPECT_EQ(base.size(), 64u);
    EXPECT_EQ(base, cache_key({"m", "p", 0.0, 10}));
    EXPECT_NE(base, cache_key({"m2", "p", 0.0, 10}));
    EXPECT_NE(base, cache_key({"m", "p2", 0.0, 10}));
    EXPECT_NE(base, cache_key({"m", "p", 0.5, 10}));
    EXPECT_NE(base, cache_key({"m", "p", 0.0, 11}));
    // Length-prefixed fields: moving a character across a boundary changes the key.
    EXPECT_NE(cache_key({"ab", "c", 0.0, 1}), cache_key({"a", "bc", 0.0, 1}));
}

TEST(PromptSha256, KnownVector) {
    EXPECT_EQ(prompt_sha256("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(EstimateTokens, FourCharsPerToken) {
    EXPECT_EQ(estimate_tokens(""), 0);
    EXPECT_EQ(estimate_tokens("a"), 1);
    EXPECT_EQ(estimate_tokens("abcd"), 1);
    EXPECT_EQ(estimate_tokens("abcde"), 2);
}

TEST(MockScript, RulesInOrderAndDefault) {
    auto script = MockScript::from_json_text(R"({
        "rules": [{"contains": ["alpha", "beta"], "reply": "both"},
                  {"contains": "alpha", "reply": "one", "input_tokens": 9, "output_tokens": 2}],
        "default_reply": "none"})");
    MockBackend backend(script);
    EXPECT_EQ(backend.fetch(request("alpha and beta")).text, "both");
    const auto one = backend.fetch(request("alpha only"));
    EXPECT_EQ(one.text, "one");
    EXPECT_EQ(one.input_tokens, std::optional<std::int64_t>(9));
    EXPECT_EQ(backend.fetch(request("gamma")).text, "none");
    EXPECT_EQ(backend.fetch_count(), 3u);
}

TEST(MockScript, Sha256Rule) {
    const std::string prompt = "exact prompt";
    auto script = MockScript::from_json_text(R"({"rules":[{"sha256":")" + prompt_sha256(prompt) +
                                             R"(","reply":"hit"}]})");
    EXPECT_NE(script.match(prompt), nullptr);
    EXPECT_EQ(script.match("exact prompt "), nullptr);
}

TEST(MockScript, RejectsMalformed) {
    EXPECT_THROW(MockScript::from_json_text("{"), Error);
    EXPECT_THROW(MockScript::from_json_text(R"({"rules":[{"reply":"x"}]})"), Error);
    EXPECT_THROW(MockScript::from_json_text(R"({"rules":[{"contains":"x"}]})"), Error);
}

TEST(Gateway, CachesAndCountsUsage) {
    auto backend = mock(R"({"rules":[{"contains":"hi","reply":"hello","input_tokens":4,"output_tokens":2}]})");
    LlmGateway gw(backend, {.backoff_base = std::chrono::milliseconds(1)});
    const auto a = gw.complete(request("hi there"));
    const auto b = gw.complete(request("hi there"));
    EXPECT_FALSE(a.cached);
    EXPECT_TRUE(b.cached);
    EXPECT_EQ(a.text, b.text);
    EXPECT_EQ(backend->fetch_count(), 1u);
    const auto u = gw.usage();
    EXPECT_EQ(u.provider_calls, 1u);
    EXPECT_EQ(u.cache_hits, 1u);
    EXPECT_EQ(u.input_tokens, 4u);
    EXPECT_EQ(u.output_tokens, 2u);
    EXPECT_TRUE(gw.is_cached(cache_key(request("hi there"))));
}

TEST(Gateway, EstimatesMissingTokenCounts) {
    LlmGateway gw(mock(R"({"default_reply":"abcdefgh"})"));
    const auto r = gw.complete(request("twelve chars"));
    EXPECT_TRUE(r.estimated);
    EXPECT_EQ(r.input_tokens, 3);
    EXPECT_EQ(r.output_tokens, 2);
    EXPECT_EQ(r.latency_ms, 0);
}

TEST(Gateway, RejectsBadRequests) {
    LlmGateway gw(mock("{}"));
    EXPECT_THROW(gw.complete(request("")), Error);
    EXPECT_THROW(gw.complete({"m", "p", -1.0, 5}), Error);
}

TEST(Gateway, PersistentCacheSurvivesRestartAndTornLines) {
    testkit::TempDir dir;
    const auto path = dir / "cache.jsonl";
    {
        LlmGateway gw(mock(R"({"default_reply":"stored"})"), {.cache_path = path});
        gw.complete(request("p1"));
        gw.complete(request("p2"));
    }
    {
        std::ofstream out(path, std::ios::app);
        out << "{\"key\": \"trunc";
    }
    auto backend = mock(R"({"default_reply":"fresh"})");
    LlmGateway gw(backend, {.cache_path = path});
    EXPECT_EQ(gw.skipped_cache_lines(), 1u);
    const auto r = gw.complete(request("p1"));
    EXPECT_TRUE(r.cached);
    EXPECT_EQ(r.text, "stored");
    EXPECT_EQ(backend->fetch_count(), 0u);
    EXPECT_EQ(gw.cached_keys().size(), 2u);
}

TEST(Gateway, RetriesTransientFailures) {
    auto backend = std::make_shared<FlakyBackend>(2);
    LlmGateway gw(backend, {.max_attempts = 3, .backoff_base = std::chrono::milliseconds(1)});
    EXPECT_EQ(gw.complete(request("x")).text, "ok");
    EXPECT_EQ(backend->calls(), 3);
}

TEST(Gateway, GivesUpAfterMaxAttempts) {
    auto backend = std::make_shared<FlakyBackend>(5);
    LlmGateway gw(backend, {.max_attempts = 2, .backoff_base = std::chrono::milliseconds(1)});
    try {
        gw.complete(request("x"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ProviderError);
    }
    EXPECT_EQ(backend->calls(), 2);
    EXPECT_EQ(gw.usage().provider_calls, 0u);
}

TEST(Gateway, CallBudget) {
    LlmGateway gw(mock(R"({"default_reply":"r"})"), {.max_calls = 2});
    gw.complete(request("a"));
    gw.complete(request("b"));
    EXPECT_NO_THROW(gw.complete(request("a")));
    try {
        gw.complete(request("c"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BudgetExceeded);
    }
}

TEST(Gateway, TokenBudget) {
    LlmGateway gw(mock(R"({"rules":[{"contains":"","reply":"r","input_tokens":6,"output_tokens":4}]})"),
                  {.max_tokens = 15});
    gw.complete(request("a"));
    gw.complete(request("b"));
    EXPECT_THROW(gw.complete(request("c")), Error);
}

TEST(Gateway, BoundsConcurrencyAndDeduplicates) {
    auto backend = std::make_shared<SlowBackend>();
    LlmGateway gw(backend, {.concurrency = 2});
    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) {
        threads.emplace_back([&gw, i] { gw.complete(request("p" + std::to_string(i % 6))); });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(backend->peak_.load(), 2);
    EXPECT_EQ(backend->calls_.load(), 6);
    EXPECT_EQ(gw.usage().provider_calls, 6u);
    EXPECT_EQ(gw.usage().cache_hits, 6u);
}

TEST(ChatCompletions, SendsRequestAndReadsUsage) {
    FakeProvider server(0, 200);
    ChatCompletionsBackend backend({.base_url = server.url(), .api_key = "sk-test"});
    const auto r = backend.fetch({"gpt-x", "hello", 0.0, 32});
    EXPECT_EQ(r.text, "echo: hello");
    EXPECT_EQ(r.input_tokens, std::optional<std::int64_t>(17));
    EXPECT_EQ(r.output_tokens, std::optional<std::int64_t>(5));
    EXPECT_EQ(server.last_auth_, "Bearer sk-test");
    const auto body = json::parse(server.last_body_);
    EXPECT_EQ(body["model"], "gpt-x");
    EXPECT_EQ(body["max_tokens"], 32);
    EXPECT_EQ(body["messages"][0]["role"], "system");
}

TEST(ChatCompletions, GatewayRetriesServerErrors) {
    FakeProvider server(2, 503);
    LlmGateway gw(std::make_shared<ChatCompletionsBackend>(HttpBackendConfig{.base_url = server.url()}),
                  {.max_attempts = 3, .backoff_base = std::chrono::milliseconds(1)});
    EXPECT_EQ(gw.complete(request("x")).text, "echo: x");
    EXPECT_EQ(server.hits(), 3);
}

TEST(ChatCompletions, RateLimitIsTransient) {
    FakeProvider server(1, 429);
    LlmGateway gw(std::make_shared<ChatCompletionsBackend>(HttpBackendConfig{.base_url = server.url()}),
                  {.max_attempts = 2, .backoff_base = std::chrono::milliseconds(1)});
    EXPECT_NO_THROW(gw.complete(request("x")));
}

TEST(ChatCompletions, AuthFailureIsNotRetried) {
    FakeProvider server(10, 401);
    LlmGateway gw(std::make_shared<ChatCompletionsBackend>(HttpBackendConfig{.base_url = server.url()}),
                  {.max_attempts = 3, .backoff_base = std::chrono::milliseconds(1)});
    try {
        gw.complete(request("x"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::AuthError);
    }
    EXPECT_EQ(server.hits(), 1);
}

TEST(ChatCompletions, ClientErrorIsProviderError) {
    FakeProvider server(10, 400);
    ChatCompletionsBackend backend({.base_url = server.url()});
    try {
        backend.fetch(request("x"));
        FAIL();
    } catch (const TransientProviderError&) {
        FAIL() << "400 must not be retried";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ProviderError);
    }
}

TEST(MakeBackend, MissingCredentials) {
    ::unsetenv("OPENAI_API_KEY");
    ::unsetenv("DNAEVAL_BASE_URL");
    for (const char* name : {"openai", "compatible"}) {
        try {
            make_backend(name);
            FAIL() << name;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::AuthError);
        }
    }
    EXPECT_THROW(make_backend("mock"), Error);
    EXPECT_THROW(make_backend("carrier-pigeon"), Error);
    EXPECT_EQ(make_backend("mock", MockScript{})->name(), "mock");
}
