#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <vector>

#include "dnaeval/error.hpp"

namespace dnaeval {

struct CompletionRequest {
    std::string model_id;
    std::string prompt_text;
    double temperature = 0.0;
    std::int64_t max_output_tokens = 1024;
};

struct CompletionReply {
    std::string text;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    bool cached = false;
    std::int64_t latency_ms = 0;
    /// Token counts came from the 4-characters-per-token heuristic, not from the provider.
    bool estimated = false;

    friend bool operator==(const CompletionReply&, const CompletionReply&) = default;
};

/// Hex SHA-256 over (model_id, prompt_text, temperature, max_output_tokens).
std::string cache_key(const CompletionRequest& request);

/// ceil(bytes / 4), at least 1 for nonempty text.
std::int64_t estimate_tokens(std::string_view text);

/// What a backend returns for one call. Missing token counts are estimated by the gateway.
struct BackendReply {
    std::string text;
    std::optional<std::int64_t> input_tokens;
    std::optional<std::int64_t> output_tokens;
};

/// Thrown by backends for failures worth retrying (rate limits, 5xx, dropped connections).
class TransientProviderError : public Error {
public:
    explicit TransientProviderError(const std::string& message)
        : Error(ErrorKind::ProviderError, message) {}
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendReply fetch(const CompletionRequest& request) = 0;
    virtual std::string name() const = 0;
    /// False for backends whose latency is meaningless (the mock); the gateway then reports 0.
    virtual bool measures_latency() const { return true; }
};

struct MockRule {
    enum class Match { Substring, PromptSha256 };
    Match match = Match::Substring;
    /// Substring rules match when every entry occurs in the prompt; sha256 rules use the first.
    std::vector<std::string> patterns;
    std::string reply;
    std::optional<std::int64_t> input_tokens;
    std::optional<std::int64_t> output_tokens;
};

/// Ordered reply rules; the first rule matching the prompt wins.
struct MockScript {
    std::vector<MockRule> rules;
    std::string default_reply;

    /// JSON: {"rules": [{"contains": "...", "reply": "..."}, {"sha256": "<hex>", "reply": "..."}],
    ///        "default_reply": "..."}. "contains" may also be a list of substrings that must all
    /// occur. Rules may carry "input_tokens"/"output_tokens".
    static MockScript from_json_text(std::string_view text);
    static MockScript load(const std::filesystem::path& path);

    const MockRule* match(std::string_view prompt) const;
};

/// Hex SHA-256 of a prompt, as used by sha256 mock rules.
std::string prompt_sha256(std::string_view prompt);

class MockBackend : public Backend {
public:
    explicit MockBackend(MockScript script) : script_(std::move(script)) {}

    BackendReply fetch(const CompletionRequest& request) override;
    std::string name() const override { return "mock"; }
    bool measures_latency() const override { return false; }

    std::size_t fetch_count() const noexcept { return fetches_.load(); }

private:
    MockScript script_;
    std::atomic<std::size_t> fetches_{0};
};

struct HttpBackendConfig {
    /// Scheme and host, e.g. "https://api.openai.com" or "http://127.0.0.1:8080".
    std::string base_url;
    std::string api_key;
    std::string path = "/v1/chat/completions";
    std::string system_prompt =
        "You are a helpful and precise assistant for checking the quality of the answer.";
    std::chrono::seconds timeout{120};
};

/// Chat-completions style provider: one system and one user message in, one text reply out.
class ChatCompletionsBackend : public Backend {
public:
    explicit ChatCompletionsBackend(HttpBackendConfig config);

    BackendReply fetch(const CompletionRequest& request) override;
    std::string name() const override { return "chat-completions"; }

private:
    HttpBackendConfig config_;
};

/// Builds a backend by name: "mock" (needs a script), "openai" (OPENAI_API_KEY,
/// optional OPENAI_BASE_URL) or "compatible" (DNAEVAL_BASE_URL, optional DNAEVAL_API_KEY).
/// Throws AuthError when a required credential variable is unset.
std::shared_ptr<Backend> make_backend(const std::string& name,
                                      const std::optional<MockScript>& script = std::nullopt);

struct GatewayOptions {
    std::size_t max_attempts = 3;
    std::chrono::milliseconds backoff_base{500};
    std::optional<std::filesystem::path> cache_path;
    /// Ceilings on provider calls and on provider tokens (input + output). Cache hits are free.
    std::optional<std::uint64_t> max_calls;
    std::optional<std::uint64_t> max_tokens;
    std::size_t concurrency = 4;
};

struct UsageTotals {
    std::uint64_t provider_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
};

/// Completion front door: cache, in-flight deduplication, retries, budget and a bound on
/// concurrent provider calls. Safe to call from many threads.
class LlmGateway {
public:
    LlmGateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});
    ~LlmGateway();

    LlmGateway(const LlmGateway&) = delete;
    LlmGateway& operator=(const LlmGateway&) = delete;

    CompletionReply complete(const CompletionRequest& request);

    bool is_cached(const std::string& key) const;
    std::set<std::string> cached_keys() const;
    UsageTotals usage() const;
    /// Lines of the cache file that could not be read (for instance a torn final write).
    std::size_t skipped_cache_lines() const noexcept { return skipped_lines_; }

private:
    void load_cache(const std::filesystem::path& path);
    void persist(const std::string& key, const CompletionRequest& request,
                 const CompletionReply& reply);
    CompletionReply fetch_with_retries(const CompletionRequest& request);

    std::shared_ptr<Backend> backend_;
    GatewayOptions options_;
    std::counting_semaphore<> slots_;

    mutable std::mutex mutex_;
    std::map<std::string, CompletionReply> cache_;
    std::map<std::string, std::shared_future<CompletionReply>> in_flight_;
    UsageTotals usage_;
    std::uint64_t reserved_calls_ = 0;

    std::mutex file_mutex_;
    std::ofstream cache_file_;
    std::size_t skipped_lines_ = 0;
};

}  // namespace dnaeval
