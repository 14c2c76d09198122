#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <papergym/util.hpp>

namespace papergym {

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_output_tokens = 4096;
    // Pipeline metadata: not part of the provider wire protocol but part of
    // the normalized fingerprint, so replay and caching stay stable.
    std::string purpose;  // e.g. "paraphrase", "synthesize", "rate:novelty"
    std::string template_version;
    std::map<std::string, std::string> params;
};

struct TokenUsage {
    int64_t input = 0;
    int64_t output = 0;
};

struct ChatResponse {
    std::string content;
    TokenUsage usage;
    int64_t latency_ms = 0;
    bool from_cache = false;
};

inline void to_json(json& j, const ChatMessage& m) { j = json{{"role", m.role}, {"content", m.content}}; }
inline void from_json(const json& j, ChatMessage& m) {
    j.at("role").get_to(m.role);
    j.at("content").get_to(m.content);
}

inline json request_to_json(const ChatRequest& r) {
    return json{{"model", r.model},
                {"messages", r.messages},
                {"temperature", r.temperature},
                {"max_output_tokens", r.max_output_tokens},
                {"purpose", r.purpose},
                {"template_version", r.template_version},
                {"params", r.params}};
}

inline json response_to_json(const ChatResponse& r) {
    return json{{"content", r.content},
                {"usage", {{"input", r.usage.input}, {"output", r.usage.output}}},
                {"latency_ms", r.latency_ms},
                {"from_cache", r.from_cache}};
}

inline ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    if (j.contains("usage")) {
        r.usage.input = j["usage"].value("input", int64_t{0});
        r.usage.output = j["usage"].value("output", int64_t{0});
    }
    r.latency_ms = 0;
    r.from_cache = true;
    return r;
}

// Normalized request fingerprint: canonical JSON (sorted keys, content
// verbatim) hashed with FNV-1a 64. Replay matching and the cache key both
// hang off this value.
inline std::string request_fingerprint(const ChatRequest& r) {
    return to_hex64(fnv1a64(request_to_json(r).dump()));
}

struct ScholarRecord {
    std::string title;
    std::string snippet;
    int year = 0;
};

inline void to_json(json& j, const ScholarRecord& s) {
    j = json{{"title", s.title}, {"snippet", s.snippet}, {"year", s.year}};
}
inline void from_json(const json& j, ScholarRecord& s) {
    j.at("title").get_to(s.title);
    j.at("snippet").get_to(s.snippet);
    j.at("year").get_to(s.year);
}

// ---------------------------------------------------------------------------
// Provider interfaces
// ---------------------------------------------------------------------------

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual ChatResponse chat(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual size_t dim() const = 0;
    // One unit vector per text, batch order preserved.
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string name() const = 0;
};

class ScholarProvider {
public:
    virtual ~ScholarProvider() = default;
    virtual std::vector<ScholarRecord> search(const std::string& query, size_t limit) = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Call logging (write-ahead)
// ---------------------------------------------------------------------------

class CallLog {
public:
    virtual ~CallLog() = default;
    virtual void record(const json& event) = 0;
};

class MemoryCallLog : public CallLog {
public:
    void record(const json& event) override {
        std::lock_guard<std::mutex> lock(mutex_);
        events_.push_back(event);
    }
    std::vector<json> events() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return events_;
    }

private:
    mutable std::mutex mutex_;
    std::vector<json> events_;
};

// Logs every attempt verbatim: the request record is written before the
// transport is invoked, so a crashed call can never leave a response without
// its request.
class LoggingChatProvider : public ChatProvider {
public:
    LoggingChatProvider(std::shared_ptr<ChatProvider> inner, CallLog* log)
        : inner_(std::move(inner)), log_(log) {}

    ChatResponse chat(const ChatRequest& request) override {
        const std::string fp = request_fingerprint(request);
        if (log_)
            log_->record(json{{"type", "chat_request"},
                              {"fingerprint", fp},
                              {"provider", inner_->name()},
                              {"request", request_to_json(request)}});
        try {
            ChatResponse resp = inner_->chat(request);
            if (log_)
                log_->record(json{{"type", "chat_response"},
                                  {"fingerprint", fp},
                                  {"response", response_to_json(resp)}});
            return resp;
        } catch (const ProviderError& e) {
            if (log_)
                log_->record(json{{"type", "chat_error"},
                                  {"fingerprint", fp},
                                  {"error", e.what()},
                                  {"retryable", e.retryable}});
            throw;
        }
    }

    std::string name() const override { return inner_->name(); }

private:
    std::shared_ptr<ChatProvider> inner_;
    CallLog* log_;
};

// ---------------------------------------------------------------------------
// Retry with exponential backoff
// ---------------------------------------------------------------------------

using Sleeper = std::function<void(int64_t /*ms*/)>;

inline Sleeper real_sleeper() {
    return [](int64_t ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

struct RetryPolicy {
    int max_attempts = 3;
    int64_t base_delay_ms = 250;
    double multiplier = 2.0;
};

class RetryingChatProvider : public ChatProvider {
public:
    RetryingChatProvider(std::shared_ptr<ChatProvider> inner, RetryPolicy policy,
                         Sleeper sleeper = real_sleeper())
        : inner_(std::move(inner)), policy_(policy), sleeper_(std::move(sleeper)) {}

    ChatResponse chat(const ChatRequest& request) override {
        int64_t delay = policy_.base_delay_ms;
        for (int attempt = 1;; ++attempt) {
            try {
                return inner_->chat(request);
            } catch (const ProviderError& e) {
                if (!e.retryable || attempt >= policy_.max_attempts) {
                    throw ProviderError(std::string("retries exhausted: ") + e.what(),
                                        request_fingerprint(request), false);
                }
                sleeper_(delay);
                delay = static_cast<int64_t>(static_cast<double>(delay) * policy_.multiplier);
            }
        }
    }

    std::string name() const override { return inner_->name(); }

private:
    std::shared_ptr<ChatProvider> inner_;
    RetryPolicy policy_;
    Sleeper sleeper_;
};

// Whole-batch retry for embedding providers: any per-item failure retries the
// entire batch; exhausted retries surface the provider's failure report.
class RetryingEmbeddingProvider : public EmbeddingProvider {
public:
    RetryingEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner, RetryPolicy policy,
                              Sleeper sleeper = real_sleeper())
        : inner_(std::move(inner)), policy_(policy), sleeper_(std::move(sleeper)) {}

    size_t dim() const override { return inner_->dim(); }
    std::string name() const override { return inner_->name(); }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        int64_t delay = policy_.base_delay_ms;
        for (int attempt = 1;; ++attempt) {
            try {
                return inner_->embed(texts);
            } catch (const ProviderError& e) {
                if (!e.retryable || attempt >= policy_.max_attempts)
                    throw ProviderError(std::string("embedding retries exhausted: ") + e.what());
                sleeper_(delay);
                delay = static_cast<int64_t>(static_cast<double>(delay) * policy_.multiplier);
            }
        }
    }

private:
    std::shared_ptr<EmbeddingProvider> inner_;
    RetryPolicy policy_;
    Sleeper sleeper_;
};

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

// Directory cache keyed by request fingerprint. The fingerprint covers the
// template version, so editing a template invalidates only its own entries.
class CachedChatProvider : public ChatProvider {
public:
    CachedChatProvider(std::shared_ptr<ChatProvider> inner, std::filesystem::path cache_dir,
                       CallLog* log = nullptr)
        : inner_(std::move(inner)), dir_(std::move(cache_dir)), log_(log) {
        std::filesystem::create_directories(dir_);
    }

    ChatResponse chat(const ChatRequest& request) override {
        const std::string fp = request_fingerprint(request);
        const auto path = dir_ / (fp + ".json");
        {
            std::lock_guard<std::mutex> lock(mutex_);
            if (std::filesystem::exists(path)) {
                ChatResponse resp = response_from_json(json::parse(read_text_file(path)));
                if (log_) log_->record(json{{"type", "cache_hit"}, {"fingerprint", fp}});
                return resp;
            }
        }
        ChatResponse resp = inner_->chat(request);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            write_text_file(path, response_to_json(resp).dump());
        }
        return resp;
    }

    std::string name() const override { return inner_->name(); }

private:
    std::shared_ptr<ChatProvider> inner_;
    std::filesystem::path dir_;
    CallLog* log_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Transcript replay
// ---------------------------------------------------------------------------

// Ordered fingerprint -> canned response pairs. Multiple entries under one
// fingerprint are consumed in file order.
class Transcript {
public:
    static Transcript load(const std::filesystem::path& path) {
        Transcript t;
        for (const auto& rec : read_jsonl(path))
            t.add(rec.at("fingerprint").get<std::string>(), rec.at("response"));
        return t;
    }

    void add(const std::string& fingerprint, json response) {
        entries_[fingerprint].push_back(std::move(response));
    }

    std::optional<json> take(const std::string& fingerprint) {
        auto it = entries_.find(fingerprint);
        if (it == entries_.end() || it->second.empty()) return std::nullopt;
        json out = std::move(it->second.front());
        it->second.pop_front();
        return out;
    }

    void save(const std::filesystem::path& path) const {
        std::string body;
        for (const auto& [fp, responses] : entries_)
            for (const auto& r : responses)
                body += json{{"fingerprint", fp}, {"response", r}}.dump() + "\n";
        write_text_file(path, body);
    }

private:
    std::map<std::string, std::deque<json>> entries_;
};

class TranscriptChatProvider : public ChatProvider {
public:
    TranscriptChatProvider(Transcript transcript, bool strict = true,
                           std::shared_ptr<ChatProvider> fallback = nullptr)
        : transcript_(std::move(transcript)), strict_(strict), fallback_(std::move(fallback)) {}

    ChatResponse chat(const ChatRequest& request) override {
        const std::string fp = request_fingerprint(request);
        std::optional<json> canned;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            canned = transcript_.take(fp);
        }
        if (canned) return response_from_json(*canned);
        if (!strict_ && fallback_) return fallback_->chat(request);
        throw ProviderError("transcript has no entry for fingerprint " + fp, fp, false);
    }

    std::string name() const override { return "transcript-replay"; }

private:
    Transcript transcript_;
    bool strict_;
    std::shared_ptr<ChatProvider> fallback_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Rate limiting
// ---------------------------------------------------------------------------

using Clock = std::function<int64_t()>;

// Enforces a minimum interval between successive acquisitions.
class RateLimiter {
public:
    RateLimiter(int64_t min_interval_ms, Clock clock = now_unix_ms, Sleeper sleeper = real_sleeper())
        : interval_(min_interval_ms), clock_(std::move(clock)), sleeper_(std::move(sleeper)) {}

    void acquire() {
        std::lock_guard<std::mutex> lock(mutex_);
        int64_t now = clock_();
        if (last_ >= 0 && now - last_ < interval_) {
            int64_t wait = interval_ - (now - last_);
            sleeper_(wait);
            now = clock_();
        }
        last_ = now;
    }

private:
    int64_t interval_;
    Clock clock_;
    Sleeper sleeper_;
    int64_t last_ = -1;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Network accounting
// ---------------------------------------------------------------------------

// Incremented by the HTTP clients on every outbound request. Mock-mode tests
// assert this counter stays flat.
inline std::atomic<uint64_t>& network_request_count() {
    static std::atomic<uint64_t> counter{0};
    return counter;
}

// ---------------------------------------------------------------------------
// Token accounting
// ---------------------------------------------------------------------------

class CostMeter {
public:
    void add(const std::string& stage, const TokenUsage& usage) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto& t = totals_[stage];
        t.input += usage.input;
        t.output += usage.output;
    }

    json to_json() const {
        std::lock_guard<std::mutex> lock(mutex_);
        json out = json::object();
        for (const auto& [stage, usage] : totals_)
            out[stage] = {{"input_tokens", usage.input}, {"output_tokens", usage.output}};
        return out;
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, TokenUsage> totals_;
};

}  // namespace papergym
