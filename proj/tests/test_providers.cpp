#include <gtest/gtest.h>

#include <filesystem>

#include <papergym/providers.hpp>
#include <papergym/providers_mock.hpp>

using namespace papergym;

namespace {

ChatRequest make_request(const std::string& purpose = "paraphrase") {
    ChatRequest req;
    req.model = "scripted-mock";
    req.messages = {{"system", "sys"}, {"user", "restate the problem"}};
    req.purpose = purpose;
    req.template_version = "v1";
    req.params = {{"problem_id", "q01"}, {"target_domain", "CV"}};
    return req;
}

// Throws a retryable error for the first `failures` calls, then succeeds.
class FlakyChatProvider : public ChatProvider {
public:
    explicit FlakyChatProvider(int failures) : remaining_(failures) {}
    ChatResponse chat(const ChatRequest& req) override {
        ++calls_;
        if (remaining_-- > 0)
            throw ProviderError("HTTP 429: rate limited", request_fingerprint(req), true);
        return ChatResponse{"ok", {}, 0, false};
    }
    std::string name() const override { return "flaky"; }
    int calls() const { return calls_; }

private:
    int remaining_;
    int calls_ = 0;
};

class CrashingChatProvider : public ChatProvider {
public:
    ChatResponse chat(const ChatRequest& req) override {
        throw ProviderError("connection dropped mid-call", request_fingerprint(req), false);
    }
    std::string name() const override { return "crashing"; }
};

class CountingChatProvider : public ChatProvider {
public:
    ChatResponse chat(const ChatRequest&) override {
        ++calls_;
        return ChatResponse{"fresh #" + std::to_string(calls_), {}, 0, false};
    }
    std::string name() const override { return "counting"; }
    int calls_ = 0;
};

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("papergym_test_" + tag + "_" + std::to_string(now_unix_ms()));
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Fingerprint, StableAndSensitive) {
    ChatRequest a = make_request();
    ChatRequest b = make_request();
    EXPECT_EQ(request_fingerprint(a), request_fingerprint(b));

    b.messages[1].content += " ";  // whitespace-preserving: content changes the hash
    EXPECT_NE(request_fingerprint(a), request_fingerprint(b));

    ChatRequest c = make_request();
    c.template_version = "v2";
    EXPECT_NE(request_fingerprint(a), request_fingerprint(c));
}

TEST(TranscriptReplay, FingerprintPresentReturnsCannedWithoutNetwork) {
    ChatRequest req = make_request();
    Transcript t;
    t.add(request_fingerprint(req), json{{"content", "canned reply"}});
    TranscriptChatProvider provider(std::move(t), /*strict=*/true);

    uint64_t before = network_request_count().load();
    ChatResponse resp = provider.chat(req);
    EXPECT_EQ(resp.content, "canned reply");
    EXPECT_EQ(network_request_count().load(), before);
}

TEST(TranscriptReplay, StrictModeMissingFingerprintNamesIt) {
    ChatRequest req = make_request();
    TranscriptChatProvider provider(Transcript{}, /*strict=*/true);
    try {
        provider.chat(req);
        FAIL() << "expected ProviderError";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.fingerprint, request_fingerprint(req));
        EXPECT_NE(std::string(e.what()).find(request_fingerprint(req)), std::string::npos);
    }
}

TEST(TranscriptReplay, RoundTripsThroughFile) {
    ChatRequest req = make_request();
    auto dir = temp_dir("transcript");
    Transcript t;
    t.add(request_fingerprint(req), json{{"content", "persisted"}});
    t.save(dir / "transcript.jsonl");

    TranscriptChatProvider provider(Transcript::load(dir / "transcript.jsonl"), true);
    EXPECT_EQ(provider.chat(req).content, "persisted");
    std::filesystem::remove_all(dir);
}

TEST(Retry, TransientFailuresAreRetriedAndLogged) {
    auto flaky = std::make_shared<FlakyChatProvider>(2);
    MemoryCallLog log;
    auto logging = std::make_shared<LoggingChatProvider>(flaky, &log);
    std::vector<int64_t> sleeps;
    RetryingChatProvider retrying(logging, RetryPolicy{5, 100, 2.0},
                                  [&](int64_t ms) { sleeps.push_back(ms); });

    ChatResponse resp = retrying.chat(make_request());
    EXPECT_EQ(resp.content, "ok");
    EXPECT_EQ(flaky->calls(), 3);
    EXPECT_EQ(sleeps, (std::vector<int64_t>{100, 200}));

    int request_records = 0;
    for (const auto& e : log.events())
        if (e["type"] == "chat_request") ++request_records;
    EXPECT_EQ(request_records, 3);
}

TEST(Retry, ExhaustedRetriesCarryFingerprint) {
    auto flaky = std::make_shared<FlakyChatProvider>(10);
    RetryingChatProvider retrying(flaky, RetryPolicy{3, 1, 2.0}, [](int64_t) {});
    ChatRequest req = make_request();
    try {
        retrying.chat(req);
        FAIL() << "expected ProviderError";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.fingerprint, request_fingerprint(req));
        EXPECT_FALSE(e.retryable);
    }
}

TEST(Logging, CrashedCallLeavesRequestWithoutResponse) {
    MemoryCallLog log;
    LoggingChatProvider provider(std::make_shared<CrashingChatProvider>(), &log);
    EXPECT_THROW(provider.chat(make_request()), ProviderError);

    auto events = log.events();
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(events[0]["type"], "chat_request");
    EXPECT_EQ(events[1]["type"], "chat_error");
    for (const auto& e : events) EXPECT_NE(e["type"], "chat_response");
}

TEST(Cache, HitShortCircuitsInnerProvider) {
    auto counting = std::make_shared<CountingChatProvider>();
    auto dir = temp_dir("cache");
    MemoryCallLog log;
    CachedChatProvider cached(counting, dir, &log);

    ChatRequest req = make_request();
    EXPECT_EQ(cached.chat(req).content, "fresh #1");
    ChatResponse second = cached.chat(req);
    EXPECT_EQ(second.content, "fresh #1");
    EXPECT_TRUE(second.from_cache);
    EXPECT_EQ(counting->calls_, 1);

    bool saw_hit = false;
    for (const auto& e : log.events()) saw_hit |= e["type"] == "cache_hit";
    EXPECT_TRUE(saw_hit);
    std::filesystem::remove_all(dir);
}

TEST(Cache, TemplateVersionChangesKey) {
    auto counting = std::make_shared<CountingChatProvider>();
    auto dir = temp_dir("cache_ver");
    CachedChatProvider cached(counting, dir, nullptr);

    ChatRequest req = make_request();
    cached.chat(req);
    req.template_version = "v2";  // same content, bumped template version
    cached.chat(req);
    EXPECT_EQ(counting->calls_, 2);
    std::filesystem::remove_all(dir);
}

TEST(ScriptedChat, ParaphraseShapeAndDeterminism) {
    ScriptedChatProvider mock;
    ChatRequest req = make_request("paraphrase");
    EXPECT_EQ(mock.chat(req).content, "P:CV:q01");
    EXPECT_EQ(mock.chat(req).content, mock.chat(req).content);
    EXPECT_GT(mock.chat(req).usage.input, 0);
}

TEST(ScriptedChat, UnknownPurposeRejected) {
    ScriptedChatProvider mock;
    EXPECT_THROW(mock.chat(make_request("freeform")), ProviderError);
}

TEST(MockEmbedder, DeterministicDistinctOrdered) {
    HashEmbedder embedder(16);
    auto a = embedder.embed({"alpha"});
    auto b = embedder.embed({"alpha"});
    EXPECT_EQ(a, b);

    auto two = embedder.embed({"alpha", "beta"});
    EXPECT_NE(two[0], two[1]);
    EXPECT_EQ(two[0], a[0]);  // batch order preserved

    std::vector<std::string> batch;
    for (int i = 0; i < 21; ++i) batch.push_back("text " + std::to_string(i));
    auto vecs = embedder.embed(batch);
    ASSERT_EQ(vecs.size(), 21u);
    for (size_t i = 0; i < vecs.size(); ++i) {
        EXPECT_EQ(vecs[i], embedder.embed({batch[i]})[0]);
        double norm = 0;
        for (double x : vecs[i]) norm += x * x;
        EXPECT_NEAR(norm, 1.0, 1e-9);
    }
    EXPECT_THROW(embedder.embed({}), ProviderError);
}

TEST(ClusteredEmbedder, DomainDetectionAndClustering) {
    EXPECT_EQ(ClusteredEmbedder::detect_domain("P:CV:q01"), DomainLabel::CV);
    EXPECT_EQ(ClusteredEmbedder::detect_domain("a speech problem"), DomainLabel::SPEECH);
    EXPECT_EQ(ClusteredEmbedder::detect_domain("about reinforcement learning here"), DomainLabel::RL);
    EXPECT_EQ(ClusteredEmbedder::detect_domain("nothing recognizable"), std::nullopt);
    // Token must stand alone: "convex" does not mention CV.
    EXPECT_EQ(ClusteredEmbedder::detect_domain("convex optimization"), std::nullopt);

    ClusteredEmbedder embedder(16, 0.05);
    auto vecs = embedder.embed({"P:CV:q01", "CV segmentation gap", "speech separation gap"});
    auto dot = [](const std::vector<double>& x, const std::vector<double>& y) {
        double s = 0;
        for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
        return s;
    };
    EXPECT_GT(dot(vecs[0], vecs[1]), 0.9);   // same cluster
    EXPECT_LT(dot(vecs[0], vecs[2]), 0.3);   // different clusters
}

TEST(EmbedRetry, WholeBatchRetriedThenFailureListsIndices) {
    class FlakyEmbedder : public EmbeddingProvider {
    public:
        size_t dim() const override { return 4; }
        std::string name() const override { return "flaky-embedder"; }
        std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
            ++calls;
            if (calls <= 2) throw ProviderError("bad vectors at indices [1,3]", "", true);
            HashEmbedder inner(4);
            return inner.embed(texts);
        }
        int calls = 0;
    };

    auto flaky = std::make_shared<FlakyEmbedder>();
    RetryingEmbeddingProvider retrying(flaky, RetryPolicy{5, 1, 2.0}, [](int64_t) {});
    auto vecs = retrying.embed({"a", "b", "c", "d"});
    EXPECT_EQ(vecs.size(), 4u);
    EXPECT_EQ(flaky->calls, 3);  // whole batch retried, not single items

    auto hopeless = std::make_shared<FlakyEmbedder>();
    RetryingEmbeddingProvider capped(hopeless, RetryPolicy{2, 1, 2.0}, [](int64_t) {});
    try {
        capped.embed({"a", "b", "c", "d"});
        FAIL() << "expected ProviderError";
    } catch (const ProviderError& e) {
        EXPECT_NE(std::string(e.what()).find("[1,3]"), std::string::npos);
    }
}

TEST(ScriptedScholar, RanksByOverlapAndHandlesEmpty) {
    ScriptedScholarProvider scholar;
    auto hits = scholar.search("masked pretraining prior work", 3);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].title, "A Survey of Masked Pretraining Objectives");

    EXPECT_TRUE(scholar.search("zzz qqq xyzzy", 5).empty());
    EXPECT_THROW(scholar.search("   ", 5), ProviderError);
}

TEST(RateLimiter, EnforcesFloorInterval) {
    int64_t fake_now = 0;
    std::vector<int64_t> waits;
    RateLimiter limiter(
        1000, [&]() { return fake_now; },
        [&](int64_t ms) {
            waits.push_back(ms);
            fake_now += ms;
        });
    limiter.acquire();  // first call never waits
    limiter.acquire();  // must wait the full interval
    fake_now += 400;
    limiter.acquire();  // waits the remaining 600
    EXPECT_EQ(waits, (std::vector<int64_t>{1000, 600}));
}

TEST(MockMode, PerformsZeroNetworkOperations) {
    uint64_t before = network_request_count().load();
    ScriptedChatProvider chat;
    HashEmbedder embedder(8);
    ScriptedScholarProvider scholar;
    chat.chat(make_request());
    embedder.embed({"any text"});
    scholar.search("pipelines", 2);
    EXPECT_EQ(network_request_count().load(), before);
}
