#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>

#include <papergym/providers.hpp>

namespace papergym {

// Live clients. Credentials and base endpoints come from the environment:
//   PAPERGYM_CHAT_BASE_URL   / PAPERGYM_CHAT_API_KEY
//   PAPERGYM_EMBED_BASE_URL  / PAPERGYM_EMBED_API_KEY
//   PAPERGYM_SCHOLAR_BASE_URL (key optional: PAPERGYM_SCHOLAR_API_KEY)
// Transient HTTP statuses (429, 5xx) raise retryable ProviderError so the
// retry wrapper can back off.

namespace http_detail {

inline std::string env_or(const char* key, const std::string& fallback) {
    const char* v = std::getenv(key);
    return v ? std::string(v) : fallback;
}

inline std::string require_env(const char* key) {
    const char* v = std::getenv(key);
    if (!v || !*v) throw ConfigError(std::string("missing environment variable: ") + key);
    return v;
}

inline bool transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

}  // namespace http_detail

// OpenAI-style chat completions client.
class HttpChatProvider : public ChatProvider {
public:
    explicit HttpChatProvider(std::string model)
        : model_(std::move(model)),
          base_url_(http_detail::env_or("PAPERGYM_CHAT_BASE_URL", "https://api.openai.com")),
          api_key_(http_detail::require_env("PAPERGYM_CHAT_API_KEY")) {}

    std::string name() const override { return model_; }

    ChatResponse chat(const ChatRequest& request) override {
        json body = {{"model", request.model.empty() ? model_ : request.model},
                     {"temperature", request.temperature},
                     {"max_tokens", request.max_output_tokens},
                     {"messages", request.messages}};
        const std::string fp = request_fingerprint(request);

        network_request_count()++;
        httplib::Client client(base_url_);
        client.set_read_timeout(120, 0);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
        int64_t started = now_unix_ms();
        auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res)
            throw ProviderError("chat transport failure: " + httplib::to_string(res.error()), fp, true);
        if (res->status != 200)
            throw ProviderError("chat HTTP " + std::to_string(res->status) + ": " + res->body, fp,
                                http_detail::transient_status(res->status));

        json parsed = json::parse(res->body);
        ChatResponse out;
        out.content = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        if (parsed.contains("usage")) {
            out.usage.input = parsed["usage"].value("prompt_tokens", int64_t{0});
            out.usage.output = parsed["usage"].value("completion_tokens", int64_t{0});
        }
        out.latency_ms = now_unix_ms() - started;
        return out;
    }

private:
    std::string model_;
    std::string base_url_;
    std::string api_key_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string model, size_t dim)
        : model_(std::move(model)),
          dim_(dim),
          base_url_(http_detail::env_or("PAPERGYM_EMBED_BASE_URL", "https://api.openai.com")),
          api_key_(http_detail::require_env("PAPERGYM_EMBED_API_KEY")) {}

    size_t dim() const override { return dim_; }
    std::string name() const override { return model_; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw ProviderError("embed: empty batch");
        json body = {{"model", model_}, {"input", texts}};

        network_request_count()++;
        httplib::Client client(base_url_);
        client.set_read_timeout(120, 0);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
        auto res = client.Post("/v1/embeddings", headers, body.dump(), "application/json");
        if (!res)
            throw ProviderError("embed transport failure: " + httplib::to_string(res.error()), "", true);
        if (res->status != 200)
            throw ProviderError("embed HTTP " + std::to_string(res->status) + ": " + res->body, "",
                                http_detail::transient_status(res->status));

        json parsed = json::parse(res->body);
        std::vector<std::vector<double>> out(texts.size());
        std::vector<size_t> failed;
        for (const auto& item : parsed.at("data")) {
            size_t index = item.at("index").get<size_t>();
            out.at(index) = item.at("embedding").get<std::vector<double>>();
        }
        for (size_t i = 0; i < out.size(); ++i) {
            if (out[i].size() != dim_) failed.push_back(i);
        }
        if (!failed.empty()) {
            std::string idx;
            for (size_t i : failed) idx += (idx.empty() ? "" : ",") + std::to_string(i);
            throw ProviderError("embed: bad vectors at indices [" + idx + "]", "", true);
        }
        for (auto& v : out) {
            double norm = 0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0)
                for (auto& x : v) x /= norm;
        }
        return out;
    }

private:
    std::string model_;
    size_t dim_;
    std::string base_url_;
    std::string api_key_;
};

// Scholarly search client (Semantic-Scholar-style GET API) behind the shared
// rate limiter.
class HttpScholarProvider : public ScholarProvider {
public:
    explicit HttpScholarProvider(int64_t min_interval_ms = 1100)
        : base_url_(http_detail::env_or("PAPERGYM_SCHOLAR_BASE_URL", "https://api.semanticscholar.org")),
          api_key_(http_detail::env_or("PAPERGYM_SCHOLAR_API_KEY", "")),
          limiter_(min_interval_ms) {}

    std::string name() const override { return "scholar-http"; }

    std::vector<ScholarRecord> search(const std::string& query, size_t limit) override {
        if (trim(query).empty()) throw ProviderError("scholar_search: empty query");
        limiter_.acquire();

        network_request_count()++;
        httplib::Client client(base_url_);
        client.set_read_timeout(60, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("x-api-key", api_key_);
        httplib::Params params{{"query", query},
                               {"limit", std::to_string(limit)},
                               {"fields", "title,abstract,year"}};
        auto res = client.Get("/graph/v1/paper/search", params, headers);
        if (!res)
            throw ProviderError("scholar transport failure: " + httplib::to_string(res.error()), "", true);
        if (res->status != 200)
            throw ProviderError("scholar HTTP " + std::to_string(res->status), "",
                                http_detail::transient_status(res->status));

        json parsed = json::parse(res->body);
        std::vector<ScholarRecord> out;
        for (const auto& item : parsed.value("data", json::array())) {
            ScholarRecord rec;
            rec.title = item.value("title", "");
            rec.snippet = item.value("abstract", "");
            if (rec.snippet.size() > 400) rec.snippet.resize(400);
            rec.year = item.value("year", 0);
            out.push_back(std::move(rec));
            if (out.size() == limit) break;
        }
        return out;
    }

private:
    std::string base_url_;
    std::string api_key_;
    RateLimiter limiter_;
};

}  // namespace papergym
