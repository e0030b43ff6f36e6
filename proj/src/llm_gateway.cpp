#include "dnaeval/llm_gateway.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

namespace dnaeval {

using json = nlohmann::json;

namespace {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::InvalidArgument, "SHA-256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

void append_field(std::string& buf, std::string_view field) {
    buf += std::to_string(field.size());
    buf += ':';
    buf += field;
}

std::string shortest(double v) {
    std::array<char, 64> buf{};
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), p);
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

}  // namespace

std::string cache_key(const CompletionRequest& request) {
    std::string canonical = "dnaeval-completion-v1;";
    append_field(canonical, request.model_id);
    append_field(canonical, request.prompt_text);
    append_field(canonical, shortest(request.temperature));
    append_field(canonical, std::to_string(request.max_output_tokens));
    return sha256_hex(canonical);
}

std::string prompt_sha256(std::string_view prompt) { return sha256_hex(prompt); }

std::int64_t estimate_tokens(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

MockScript MockScript::from_json_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("mock script is not valid JSON: ") + e.what());
    }
    MockScript script;
    script.default_reply = doc.value("default_reply", "");
    if (doc.contains("rules")) {
        for (const auto& r : doc.at("rules")) {
            MockRule rule;
            if (r.contains("contains")) {
                rule.match = MockRule::Match::Substring;
                const auto& c = r.at("contains");
                if (c.is_array()) {
                    rule.patterns = c.get<std::vector<std::string>>();
                } else {
                    rule.patterns = {c.get<std::string>()};
                }
                if (rule.patterns.empty()) throw Error(ErrorKind::InvalidArgument, "mock rule has an empty 'contains'");
            } else if (r.contains("sha256")) {
                rule.match = MockRule::Match::PromptSha256;
                rule.patterns = {r.at("sha256").get<std::string>()};
            } else {
                throw Error(ErrorKind::InvalidArgument, "mock rule needs 'contains' or 'sha256'");
            }
            if (!r.contains("reply")) throw Error(ErrorKind::InvalidArgument, "mock rule needs 'reply'");
            rule.reply = r.at("reply").get<std::string>();
            if (r.contains("input_tokens")) rule.input_tokens = r.at("input_tokens").get<std::int64_t>();
            if (r.contains("output_tokens")) rule.output_tokens = r.at("output_tokens").get<std::int64_t>();
            script.rules.push_back(std::move(rule));
        }
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open mock script " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

const MockRule* MockScript::match(std::string_view prompt) const {
    std::optional<std::string> digest;
    for (const auto& rule : rules) {
        if (rule.match == MockRule::Match::Substring) {
            const bool all = std::all_of(rule.patterns.begin(), rule.patterns.end(), [&](const std::string& p) {
                return prompt.find(p) != std::string_view::npos;
            });
            if (all) return &rule;
        } else {
            if (!digest) digest = prompt_sha256(prompt);
            if (!rule.patterns.empty() && *digest == rule.patterns.front()) return &rule;
        }
    }
    return nullptr;
}

BackendReply MockBackend::fetch(const CompletionRequest& request) {
    ++fetches_;
    BackendReply out;
    if (const auto* rule = script_.match(request.prompt_text)) {
        out.text = rule->reply;
        out.input_tokens = rule->input_tokens;
        out.output_tokens = rule->output_tokens;
    } else {
        out.text = script_.default_reply;
    }
    return out;
}

ChatCompletionsBackend::ChatCompletionsBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) {
        throw Error(ErrorKind::InvalidArgument, "chat-completions backend needs a base URL");
    }
}

BackendReply ChatCompletionsBackend::fetch(const CompletionRequest& request) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    json body = {
        {"model", request.model_id},
        {"messages", json::array({{{"role", "system"}, {"content", config_.system_prompt}},
                                  {{"role", "user"}, {"content", request.prompt_text}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
    };

    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) {
        throw TransientProviderError("request to " + config_.base_url + " failed: " +
                                     httplib::to_string(res.error()));
    }
    if (res->status == 401 || res->status == 403) {
        throw Error(ErrorKind::AuthError, "provider rejected credentials (HTTP " +
                                              std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransientProviderError("provider returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw Error(ErrorKind::ProviderError,
                    "provider returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }

    BackendReply out;
    try {
        const auto doc = json::parse(res->body);
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        out.text = content.is_null() ? std::string() : content.get<std::string>();
        if (doc.contains("usage") && doc["usage"].is_object()) {
            const auto& usage = doc["usage"];
            if (usage.contains("prompt_tokens")) out.input_tokens = usage["prompt_tokens"].get<std::int64_t>();
            if (usage.contains("completion_tokens")) {
                out.output_tokens = usage["completion_tokens"].get<std::int64_t>();
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ProviderError, std::string("malformed provider reply: ") + e.what());
    }
    return out;
}

std::shared_ptr<Backend> make_backend(const std::string& name, const std::optional<MockScript>& script) {
    if (name == "mock") {
        if (!script) throw Error(ErrorKind::InvalidArgument, "mock backend needs a script");
        return std::make_shared<MockBackend>(*script);
    }
    if (name == "openai") {
        auto key = env("OPENAI_API_KEY");
        if (!key) throw Error(ErrorKind::AuthError, "OPENAI_API_KEY is not set");
        HttpBackendConfig cfg;
        cfg.base_url = env("OPENAI_BASE_URL").value_or("https://api.openai.com");
        cfg.api_key = *key;
        return std::make_shared<ChatCompletionsBackend>(cfg);
    }
    if (name == "compatible") {
        auto base = env("DNAEVAL_BASE_URL");
        if (!base) throw Error(ErrorKind::AuthError, "DNAEVAL_BASE_URL is not set");
        HttpBackendConfig cfg;
        cfg.base_url = *base;
        cfg.api_key = env("DNAEVAL_API_KEY").value_or("");
        return std::make_shared<ChatCompletionsBackend>(cfg);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown backend '" + name + "'");
}

LlmGateway::LlmGateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.concurrency))) {
    if (!backend_) throw Error(ErrorKind::InvalidArgument, "gateway needs a backend");
    if (options_.max_attempts == 0) options_.max_attempts = 1;
    if (options_.cache_path) {
        load_cache(*options_.cache_path);
        if (options_.cache_path->has_parent_path()) {
            std::filesystem::create_directories(options_.cache_path->parent_path());
        }
        cache_file_.open(*options_.cache_path, std::ios::app | std::ios::binary);
        if (!cache_file_) {
            throw Error(ErrorKind::IoError, "cannot open cache file " + options_.cache_path->string());
        }
    }
}

LlmGateway::~LlmGateway() = default;

void LlmGateway::load_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto rec = json::parse(line);
            CompletionRequest req;
            req.model_id = rec.at("model_id").get<std::string>();
            req.prompt_text = rec.at("prompt_text").get<std::string>();
            req.temperature = rec.at("temperature").get<double>();
            req.max_output_tokens = rec.at("max_output_tokens").get<std::int64_t>();
            const auto key = rec.at("key").get<std::string>();
            if (key != cache_key(req)) {
                ++skipped_lines_;
                continue;
            }
            CompletionReply reply;
            reply.text = rec.at("text").get<std::string>();
            reply.input_tokens = rec.at("input_tokens").get<std::int64_t>();
            reply.output_tokens = rec.at("output_tokens").get<std::int64_t>();
            reply.estimated = rec.value("estimated", false);
            cache_.insert_or_assign(key, std::move(reply));
        } catch (const json::exception&) {
            ++skipped_lines_;
        }
    }
}

void LlmGateway::persist(const std::string& key, const CompletionRequest& request,
                         const CompletionReply& reply) {
    if (!cache_file_.is_open()) return;
    json rec = {
        {"key", key},
        {"model_id", request.model_id},
        {"prompt_text", request.prompt_text},
        {"temperature", request.temperature},
        {"max_output_tokens", request.max_output_tokens},
        {"text", reply.text},
        {"input_tokens", reply.input_tokens},
        {"output_tokens", reply.output_tokens},
        {"estimated", reply.estimated},
    };
    std::lock_guard lock(file_mutex_);
    cache_file_ << rec.dump() << '\n';
    cache_file_.flush();
}

CompletionReply LlmGateway::fetch_with_retries(const CompletionRequest& request) {
    for (std::size_t attempt = 1;; ++attempt) {
        try {
            slots_.acquire();
            const auto start = std::chrono::steady_clock::now();
            BackendReply raw;
            try {
                raw = backend_->fetch(request);
            } catch (...) {
                slots_.release();
                throw;
            }
            slots_.release();
            const auto elapsed = std::chrono::steady_clock::now() - start;

            CompletionReply reply;
            reply.text = std::move(raw.text);
            reply.estimated = !raw.input_tokens || !raw.output_tokens;
            reply.input_tokens = raw.input_tokens.value_or(estimate_tokens(request.prompt_text));
            reply.output_tokens = raw.output_tokens.value_or(estimate_tokens(reply.text));
            if (backend_->measures_latency()) {
                reply.latency_ms =
                    std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
            }
            return reply;
        } catch (const TransientProviderError& e) {
            if (attempt >= options_.max_attempts) {
                throw Error(ErrorKind::ProviderError, "giving up after " + std::to_string(attempt) +
                                                          " attempts: " + e.what());
            }
            std::this_thread::sleep_for(options_.backoff_base * (1LL << (attempt - 1)));
        }
    }
}

CompletionReply LlmGateway::complete(const CompletionRequest& request) {
    if (request.prompt_text.empty()) {
        throw Error(ErrorKind::InvalidArgument, "completion request needs a prompt");
    }
    if (!(request.temperature >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "temperature must be >= 0");
    }
    const auto key = cache_key(request);

    std::promise<CompletionReply> promise;
    {
        std::unique_lock lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            ++usage_.cache_hits;
            CompletionReply hit = it->second;
            hit.cached = true;
            hit.latency_ms = 0;
            return hit;
        }
        if (auto it = in_flight_.find(key); it != in_flight_.end()) {
            auto pending = it->second;
            ++usage_.cache_hits;
            lock.unlock();
            CompletionReply hit = pending.get();
            hit.cached = true;
            hit.latency_ms = 0;
            return hit;
        }
        if (options_.max_calls && reserved_calls_ >= *options_.max_calls) {
            throw Error(ErrorKind::BudgetExceeded,
                        "call ceiling of " + std::to_string(*options_.max_calls) + " reached");
        }
        if (options_.max_tokens &&
            usage_.input_tokens + usage_.output_tokens >= *options_.max_tokens) {
            throw Error(ErrorKind::BudgetExceeded,
                        "token ceiling of " + std::to_string(*options_.max_tokens) + " reached");
        }
        ++reserved_calls_;
        in_flight_.emplace(key, promise.get_future().share());
    }

    try {
        CompletionReply reply = fetch_with_retries(request);
        persist(key, request, reply);
        {
            std::lock_guard lock(mutex_);
            ++usage_.provider_calls;
            usage_.input_tokens += static_cast<std::uint64_t>(reply.input_tokens);
            usage_.output_tokens += static_cast<std::uint64_t>(reply.output_tokens);
            CompletionReply stored = reply;
            stored.latency_ms = 0;
            cache_.insert_or_assign(key, stored);
            in_flight_.erase(key);
        }
        promise.set_value(reply);
        return reply;
    } catch (...) {
        {
            std::lock_guard lock(mutex_);
            in_flight_.erase(key);
            --reserved_calls_;
        }
        promise.set_exception(std::current_exception());
        throw;
    }
}

bool LlmGateway::is_cached(const std::string& key) const {
    std::lock_guard lock(mutex_);
    return cache_.count(key) > 0;
}

std::set<std::string> LlmGateway::cached_keys() const {
    std::lock_guard lock(mutex_);
    std::set<std::string> keys;
    for (const auto& [k, v] : cache_) keys.insert(k);
    return keys;
}

UsageTotals LlmGateway::usage() const {
    std::lock_guard lock(mutex_);
    return usage_;
}

}  // namespace dnaeval
