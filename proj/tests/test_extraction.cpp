#include <gtest/gtest.h>

#include <filesystem>
#include <functional>

#include <papergym/extraction.hpp>
#include <papergym/providers_mock.hpp>

#include "test_support.hpp"

using namespace papergym;
using testsupport::templates;
namespace fs = std::filesystem;

namespace {

class FakeChat : public ChatProvider {
public:
    explicit FakeChat(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
    ChatResponse chat(const ChatRequest& req) override {
        ++calls;
        return ChatResponse{fn_(req), {}, 0, false};
    }
    std::string name() const override { return "fake-agent"; }
    int calls = 0;

private:
    std::function<std::string(const ChatRequest&)> fn_;
};

struct BundleFixture {
    fs::path root;
    PaperBundle bundle;

    explicit BundleFixture(const std::string& tag) {
        root = fs::temp_directory_path() / ("papergym_ext_" + tag + "_" +
                                            std::to_string(now_unix_ms()));
        fs::create_directories(root / "bundle");
        std::string paper;
        for (int i = 1; i <= 60; ++i) {
            paper += "line " + std::to_string(i) + ": filler prose about the paper\n";
        }
        paper += "The central contribution is a Neural CDE fusion adapter.\n";
        paper += "We verify mechanism-1 in Section 3 and mechanism-2 in Section 4.\n";
        write_text_file(root / "bundle" / "paper.md", paper);
        bundle = PaperBundle{"2101.00001", root / "bundle"};
    }
    ~BundleFixture() { fs::remove_all(root); }

    SandboxFactory factory(SandboxLimits limits = {}) const {
        return SandboxFactory(root / "work", IsolationBackend::restricted_subprocess, false,
                              limits);
    }
};

std::string draft_action(std::initializer_list<int> indices) {
    json seeds = json::array();
    for (int i : indices)
        seeds.push_back({{"problem", "problem " + std::to_string(i)},
                         {"method", "method " + std::to_string(i) + " using mechanism-" +
                                        std::to_string(i)},
                         {"domain", "CV"},
                         {"venue", "V"},
                         {"year", 2020}});
    return json{{"action", "draft"}, {"seeds", seeds}}.dump();
}

}  // namespace

TEST(ToolExec, ReadReturnsVerbatimLineSlice) {
    BundleFixture fx("read");
    auto sandbox = fx.factory().create(fx.bundle);
    auto call = tool_exec(sandbox, "read", json{{"path", "paper.md"}, {"start", 1}, {"end", 40}}, 0);
    auto lines = split_lines(call.output);
    ASSERT_EQ(lines.size(), 40u);
    EXPECT_EQ(lines[0], "line 1: filler prose about the paper");
    EXPECT_EQ(lines[39], "line 40: filler prose about the paper");
    EXPECT_FALSE(call.refused);
}

TEST(ToolExec, GrepReturnsMatchingLinesWithNumbers) {
    BundleFixture fx("grep");
    auto sandbox = fx.factory().create(fx.bundle);
    auto call = tool_exec(sandbox, "grep", json{{"pattern", "Neural CDE"}, {"path", "paper.md"}}, 0);
    ASSERT_FALSE(call.output.empty());
    EXPECT_NE(call.output.find("paper.md:61:"), std::string::npos);
    EXPECT_NE(call.output.find("Neural CDE"), std::string::npos);

    auto miss = tool_exec(sandbox, "grep", json{{"pattern", "absent string xyzzy"},
                                                {"path", "paper.md"}}, 1);
    EXPECT_TRUE(miss.output.empty());
    EXPECT_FALSE(miss.refused);
}

TEST(ToolExec, BashEscapeRefusedWithViolationRecord) {
    BundleFixture fx("escape");
    auto sandbox = fx.factory().create(fx.bundle);
    auto call = tool_exec(sandbox, "bash", json{{"command", "cat ../../etc/hostname"}}, 0);
    EXPECT_TRUE(call.refused);
    ASSERT_EQ(sandbox.violations().size(), 1u);
    EXPECT_NE(sandbox.violations()[0].find("cat ../../etc/hostname"), std::string::npos);
}

TEST(ToolExec, AdversarialPathsNeverEscape) {
    BundleFixture fx("fuzz");
    auto sandbox = fx.factory().create(fx.bundle);
    const std::vector<std::string> attempts = {
        "../paper.md", "../../etc/passwd", "/etc/passwd", "~/secrets",
        "a/../../outside", "..", "subdir/../../../etc/hosts"};
    int step = 0;
    for (const auto& path : attempts) {
        auto read_call = tool_exec(sandbox, "read", json{{"path", path}}, step++);
        EXPECT_TRUE(read_call.refused) << path;
    }
    for (const auto& path : attempts) {
        auto bash_call = tool_exec(sandbox, "bash", json{{"command", "cat " + path}}, step++);
        EXPECT_TRUE(bash_call.refused) << path;
    }
    EXPECT_GE(sandbox.violations().size(), attempts.size());
}

TEST(ToolExec, BashRunsConfinedAndNetworkCommandsRefused) {
    BundleFixture fx("bash");
    auto sandbox = fx.factory().create(fx.bundle);
    auto ok = tool_exec(sandbox, "bash", json{{"command", "wc -l paper.md"}}, 0);
    EXPECT_FALSE(ok.refused);
    EXPECT_NE(ok.output.find("62"), std::string::npos);

    auto net = tool_exec(sandbox, "bash", json{{"command", "curl example.com"}}, 1);
    EXPECT_TRUE(net.refused);
    EXPECT_NE(net.output.find("network"), std::string::npos);
}

TEST(ToolExec, BashTimeoutYieldsPartialOutputWithMarker) {
    BundleFixture fx("timeout");
    SandboxLimits limits;
    limits.bash_timeout_ms = 300;
    auto sandbox = fx.factory(limits).create(fx.bundle);
    auto call = tool_exec(sandbox, "bash",
                          json{{"command", "echo started; sleep 5; echo never"}}, 0);
    EXPECT_TRUE(call.timed_out);
    EXPECT_NE(call.output.find("started"), std::string::npos);
    EXPECT_EQ(call.output.find("never"), std::string::npos);
    EXPECT_NE(call.output.find("[timeout"), std::string::npos);
}

TEST(ToolExec, OutputCapTruncatesWithMarker) {
    BundleFixture fx("cap");
    SandboxLimits limits;
    limits.output_cap = 200;
    auto sandbox = fx.factory(limits).create(fx.bundle);
    auto call = tool_exec(sandbox, "read", json{{"path", "paper.md"}}, 0);
    EXPECT_LE(call.output.size(), 200u + 20u);
    EXPECT_NE(call.output.find("...[truncated]"), std::string::npos);
}

TEST(ExtractTooled, ScriptedAgentVerifiesBothDrafts) {
    BundleFixture fx("happy");
    ScriptedChatProvider agent;
    auto trace = extract_tooled(fx.bundle, agent, fx.factory(), templates());

    EXPECT_EQ(trace.mode, "tooled");
    EXPECT_FALSE(trace.incomplete);
    ASSERT_EQ(trace.verified_seeds.size(), 2u);
    EXPECT_TRUE(trace.dropped.empty());
    EXPECT_EQ(trace.tool_calls.size(), 3u);  // read + grep + grep
    EXPECT_FALSE(trace.non_library);
    for (const auto& s : trace.verified_seeds) {
        EXPECT_EQ(s.paper_id, fx.bundle.paper_id);
        EXPECT_FALSE(s.seed_id.empty());
        EXPECT_FALSE(trim(s.problem).empty());
        EXPECT_FALSE(trim(s.method).empty());
    }
    // step_index is monotone
    for (size_t i = 1; i < trace.tool_calls.size(); ++i)
        EXPECT_GT(trace.tool_calls[i].step_index, trace.tool_calls[i - 1].step_index);
}

TEST(ExtractTooled, UnverifiedDraftAutoDemotedToDropped) {
    // read -> draft 1 -> grep -> draft 2 -> finalize: draft 2 has no tool
    // call after it and must be dropped as unverified.
    BundleFixture fx("demote");
    FakeChat agent([](const ChatRequest& req) {
        int turn = std::stoi(req.params.at("turn"));
        switch (turn) {
            case 0: return json{{"action", "read"}, {"path", "paper.md"}}.dump();
            case 1: return draft_action({1});
            case 2: return json{{"action", "grep"}, {"pattern", "mechanism-1"},
                                {"path", "paper.md"}}.dump();
            case 3: return draft_action({2});
            default: return json{{"action", "finalize"}}.dump();
        }
    });
    auto trace = extract_tooled(fx.bundle, agent, fx.factory(), templates());
    ASSERT_EQ(trace.verified_seeds.size(), 1u);
    EXPECT_NE(trace.verified_seeds[0].method.find("mechanism-1"), std::string::npos);
    ASSERT_EQ(trace.dropped.size(), 1u);
    EXPECT_EQ(trace.dropped[0].reason, "unverified");
}

TEST(ExtractTooled, GrepMissLeavesLoopRunning) {
    BundleFixture fx("miss");
    FakeChat agent([](const ChatRequest& req) {
        int turn = std::stoi(req.params.at("turn"));
        switch (turn) {
            case 0: return draft_action({1});
            case 1: return json{{"action", "grep"}, {"pattern", "absent xyzzy"},
                                {"path", "paper.md"}}.dump();
            case 2: return json{{"action", "grep"}, {"pattern", "mechanism-1"},
                                {"path", "paper.md"}}.dump();
            default: return json{{"action", "finalize"}}.dump();
        }
    });
    auto trace = extract_tooled(fx.bundle, agent, fx.factory(), templates());
    EXPECT_EQ(trace.tool_calls.size(), 2u);
    EXPECT_TRUE(trace.tool_calls[0].output.empty());
    EXPECT_EQ(trace.verified_seeds.size(), 1u);
}

TEST(ExtractTooled, StepBudgetExhaustionMarksIncomplete) {
    BundleFixture fx("budget");
    FakeChat agent([](const ChatRequest&) {
        return json{{"action", "grep"}, {"pattern", "line"}, {"path", "paper.md"}}.dump();
    });
    ExtractionOptions options;
    options.step_budget = 5;
    auto trace = extract_tooled(fx.bundle, agent, fx.factory(), templates(), options);
    EXPECT_TRUE(trace.incomplete);
    EXPECT_EQ(trace.tool_calls.size(), 5u);
}

TEST(ExtractTooled, EndlesslyDraftingAgentHitsTurnBound) {
    BundleFixture fx("spin");
    FakeChat agent([](const ChatRequest&) { return draft_action({1}); });
    ExtractionOptions options;
    options.step_budget = 4;
    auto trace = extract_tooled(fx.bundle, agent, fx.factory(), templates(), options);
    EXPECT_TRUE(trace.incomplete);
    EXPECT_LE(agent.calls, options.step_budget * 2 + 16);
}

TEST(ExtractTooled, FourVerifiedDraftsCapAtThree) {
    BundleFixture fx("cap4");
    FakeChat agent([](const ChatRequest& req) {
        int turn = std::stoi(req.params.at("turn"));
        switch (turn) {
            case 0: return draft_action({1, 2, 3, 4});
            case 1: return json{{"action", "grep"}, {"pattern", "mechanism"},
                                {"path", "paper.md"}}.dump();
            default: return json{{"action", "finalize"}}.dump();
        }
    });
    auto trace = extract_tooled(fx.bundle, agent, fx.factory(), templates());
    EXPECT_EQ(trace.verified_seeds.size(), 3u);
    ASSERT_EQ(trace.dropped.size(), 1u);
    EXPECT_EQ(trace.dropped[0].reason, "over contribution cap");
}

TEST(ExtractDirect, ZeroToolCallsAndNonLibraryFlag) {
    BundleFixture fx("direct");
    ScriptedChatProvider agent;
    auto trace = extract_direct(fx.bundle, agent, templates());
    EXPECT_EQ(trace.mode, "direct");
    EXPECT_TRUE(trace.tool_calls.empty());
    EXPECT_TRUE(trace.non_library);
    EXPECT_FALSE(trace.incomplete);
    EXPECT_EQ(trace.verified_seeds.size(), 2u);
}

TEST(ExtractDirect, FourSeedsKeepFirstThreeWithCapReason) {
    BundleFixture fx("direct4");
    FakeChat agent([](const ChatRequest&) {
        json seeds = json::array();
        for (int i = 1; i <= 4; ++i)
            seeds.push_back({{"problem", "p" + std::to_string(i)},
                             {"method", "m" + std::to_string(i)},
                             {"domain", "RL"},
                             {"venue", "V"},
                             {"year", 2021}});
        return json{{"seeds", seeds}}.dump();
    });
    auto trace = extract_direct(fx.bundle, agent, templates());
    ASSERT_EQ(trace.verified_seeds.size(), 3u);
    EXPECT_EQ(trace.verified_seeds[2].problem, "p3");
    ASSERT_EQ(trace.dropped.size(), 1u);
    EXPECT_EQ(trace.dropped[0].reason, "over contribution cap");
}

TEST(ExtractDirect, ParseFailureRepromptsOnceThenSkips) {
    BundleFixture fx("directbad");
    FakeChat agent([](const ChatRequest&) { return std::string("not a schema reply"); });
    auto trace = extract_direct(fx.bundle, agent, templates());
    EXPECT_TRUE(trace.incomplete);
    EXPECT_TRUE(trace.verified_seeds.empty());
    EXPECT_EQ(agent.calls, 2);
}

TEST(ExtractDirect, OversizedPaperHeadTruncatedWithFlag) {
    BundleFixture fx("directbig");
    ExtractionOptions options;
    options.direct_max_chars = 500;
    ScriptedChatProvider agent;
    auto trace = extract_direct(fx.bundle, agent, templates(), options);
    EXPECT_TRUE(trace.truncated_input);
}

TEST(Traces, TooledAndDirectAreSchemaIdentical) {
    BundleFixture fx("schema");
    ScriptedChatProvider agent;
    auto tooled = json(extract_tooled(fx.bundle, agent, fx.factory(), templates()));
    auto direct = json(extract_direct(fx.bundle, agent, templates()));
    std::set<std::string> tooled_keys, direct_keys;
    for (auto it = tooled.begin(); it != tooled.end(); ++it) tooled_keys.insert(it.key());
    for (auto it = direct.begin(); it != direct.end(); ++it) direct_keys.insert(it.key());
    EXPECT_EQ(tooled_keys, direct_keys);
    EXPECT_GT(tooled["tool_calls"].size(), 0u);
    EXPECT_EQ(direct["tool_calls"].size(), 0u);
}

TEST(Traces, VerifiedSeedsSatisfyLibraryInvariants) {
    BundleFixture fx("invariants");
    ScriptedChatProvider agent;
    auto trace = extract_tooled(fx.bundle, agent, fx.factory(), templates());
    std::vector<json> records;
    for (const auto& s : trace.verified_seeds) records.push_back(json(s));
    HashEmbedder embedder(8);
    auto library = ingest(records, embedder).library;  // throws on invariant violation
    EXPECT_EQ(library.size(), trace.verified_seeds.size());
}
