#include <gtest/gtest.h>

#include <filesystem>

#include <papergym/orchestrator.hpp>

#include "test_support.hpp"

using namespace papergym;
namespace fs = std::filesystem;

namespace {

// A self-contained workspace: clustered library on disk, four problems, three
// paper bundles, config wired to the repo templates.
struct Workspace {
    fs::path root;

    explicit Workspace(const std::string& tag) {
        root = fs::temp_directory_path() / ("papergym_orch_" + tag + "_" +
                                            std::to_string(now_unix_ms()));
        fs::create_directories(root);

        ClusteredEmbedder embedder(16, 0.02);
        auto library = testsupport::clustered_library(5, embedder, "w");
        save_library(library, root / "lib" / "seeds.jsonl", root / "lib" / "vectors.jsonl");

        std::string problems;
        size_t i = 0;
        for (DomainLabel d : {DomainLabel::CV, DomainLabel::SPEECH, DomainLabel::RL,
                              DomainLabel::MULTIMODAL}) {
            Problem p = testsupport::make_problem("q0" + std::to_string(++i), d);
            problems += json(p).dump() + "\n";
        }
        write_text_file(root / "problems.jsonl", problems);

        for (const std::string pid : {"1901.00001", "1902.00002", "1903.00003"}) {
            std::string paper = "# Paper " + pid + "\n\n";
            for (int line = 0; line < 30; ++line)
                paper += "Body line " + std::to_string(line) +
                         " discussing mechanism-1 and mechanism-2 in detail.\n";
            write_text_file(root / "papers" / pid / "paper.md", paper);
        }
    }
    ~Workspace() { fs::remove_all(root); }

    RunConfig config(const std::string& out_name) const {
        RunConfig c;
        c.paths.library_seeds = (root / "lib" / "seeds.jsonl").string();
        c.paths.library_vectors = (root / "lib" / "vectors.jsonl").string();
        c.paths.problems = (root / "problems.jsonl").string();
        c.paths.papers_dir = (root / "papers").string();
        c.paths.templates_dir = (testsupport::repo_dir() / "templates").string();
        c.paths.output_dir = (root / out_name).string();
        return c;
    }
};

// Manifest comparison modulo timestamps and the output path itself.
json normalized_manifest(const fs::path& dir) {
    json out = json::object();
    for (const auto& de : fs::recursive_directory_iterator(dir)) {
        if (!de.is_regular_file()) continue;
        std::string rel = fs::relative(de.path(), dir).string();
        if (de.path().extension() == ".jsonl") {
            json records = json::array();
            for (const auto& rec : read_jsonl(de.path()))
                records.push_back(normalize_manifest_record(rec));
            out[rel] = records;
        } else if (de.path().extension() == ".json") {
            json config = normalize_manifest_record(json::parse(read_text_file(de.path())));
            if (config.contains("paths")) config["paths"]["output_dir"] = "";
            if (config.contains("concurrency")) config["concurrency"] = 0;
            out[rel] = config;
        } else {
            // Reports embed a wall-clock line; mask it like the stream keys.
            std::string masked;
            for (const auto& line : split_lines(read_text_file(de.path())))
                masked += (line.rfind("Timing:", 0) == 0 ? std::string("Timing: (masked)")
                                                         : line) + "\n";
            out[rel] = masked;
        }
    }
    return out;
}

}  // namespace

TEST(Stage1, ThreePapersPairedTracesAndSummary) {
    Workspace ws("stage1");
    auto result = cmd_stage1(ws.config("run_stage1"));
    EXPECT_FALSE(result.partial);

    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto cells = manifest.read_stream("stage1_cells");
    ASSERT_EQ(cells.size(), 3u);
    for (const auto& cell : cells) {
        EXPECT_EQ(cell.at("tooled").at("mode"), "tooled");
        EXPECT_EQ(cell.at("direct").at("mode"), "direct");
        EXPECT_GT(cell.at("tooled").at("tool_calls").size(), 0u);
        EXPECT_EQ(cell.at("direct").at("tool_calls").size(), 0u);
        EXPECT_TRUE(cell.at("direct").at("non_library").get<bool>());
    }
    auto table = read_text_file(manifest.report_path("stage1_summary.txt"));
    EXPECT_NE(table.find("tooled"), std::string::npos);
    EXPECT_NE(table.find("direct"), std::string::npos);
}

TEST(Stage1, ResumeExecutesOnlyMissingCells) {
    Workspace ws("resume");
    auto first = cmd_stage1(ws.config("run_resume"));
    RunManifest manifest = RunManifest::open(first.manifest_dir);
    const size_t cells_before = manifest.read_stream("cells").size();
    const size_t calls_before = manifest.read_stream("provider_calls").size();

    auto second = cmd_stage1(ws.config("run_resume"));
    EXPECT_FALSE(second.partial);
    RunManifest reopened = RunManifest::open(second.manifest_dir);
    EXPECT_EQ(reopened.read_stream("cells").size(), cells_before);
    EXPECT_EQ(reopened.read_stream("stage1_cells").size(), 3u);
    EXPECT_EQ(reopened.read_stream("provider_calls").size(), calls_before);
}

TEST(Stage1, NegativeControlUsesShuffledPairingAndCollapses) {
    Workspace ws("control");
    auto config = ws.config("run_control");
    config.negative_control = true;
    auto result = cmd_stage1(config);

    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto control = manifest.read_stream("stage1_control");
    ASSERT_GT(control.size(), 0u);
    int mismatched = 0;
    for (const auto& rec : control) {
        if (!rec.at("pair_matched").get<bool>()) ++mismatched;
        EXPECT_EQ(rec.at("grounding").get<int>(), 1);  // scripted judge collapses
    }
    EXPECT_GT(mismatched, 0);
}

TEST(Stage2, ClusteredLibraryGivesFullParaphraseCoverage) {
    Workspace ws("stage2");
    auto result = cmd_stage2(ws.config("run_stage2"));
    EXPECT_FALSE(result.partial);

    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto cells = manifest.read_stream("stage2_cells");
    ASSERT_EQ(cells.size(), 4u);
    for (const auto& cell : cells) {
        EXPECT_EQ(cell.at("paraphrase").at("coverage").get<int>(), 7);
        EXPECT_LE(cell.at("single").at("coverage").get<int>(), 7);
        EXPECT_EQ(cell.at("paraphrase").at("pool").at("budget").get<size_t>(),
                  cell.at("single").at("pool").at("budget").get<size_t>());  // budget parity
        EXPECT_EQ(cell.at("paraphrases").size(), 7u);
    }
    EXPECT_TRUE(fs::is_regular_file(manifest.report_path("stage2_summary.csv")));
}

TEST(Stage3, SixteenMethodsCCenteredGridAndStats) {
    Workspace ws("stage3");
    auto result = cmd_stage3(ws.config("run_stage3"));
    EXPECT_FALSE(result.partial);

    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto methods = manifest.read_stream("stage3_methods");
    ASSERT_EQ(methods.size(), 16u);  // 4 problems x 4 conditions

    std::map<std::string, int> per_condition;
    for (const auto& m : methods) {
        per_condition[m.at("condition").get<std::string>()]++;
        if (m.at("condition") == "A") {
            EXPECT_TRUE(m.at("pool").at("pool").at("entries").empty());
            EXPECT_TRUE(m.at("method").at("inspired_by").empty());
        }
    }
    for (const std::string cond : {"A", "B", "C", "D"}) EXPECT_EQ(per_condition[cond], 4);

    // C-centered restricted grid: novelty and validity vs A/B/D, coherence vs
    // D only -> 7 verdicts per problem.
    auto verdicts = manifest.read_stream("stage3_pairwise");
    EXPECT_EQ(verdicts.size(), 4u * 7u);
    for (const auto& v : verdicts) {
        if (v.at("verdict").at("axis") == "coherence")
            EXPECT_EQ(v.at("other_condition"), "D");
        EXPECT_EQ(v.at("verdict").at("left_id").get<std::string>().substr(0, 2), "C:");
    }

    auto stats_json = json::parse(read_text_file(manifest.report_path("stage3_stats.json")));
    EXPECT_TRUE(stats_json.contains("pairwise"));
    EXPECT_TRUE(stats_json.contains("mcnemar"));
    EXPECT_TRUE(fs::is_regular_file(manifest.report_path("stage3_per_condition.txt")));
}

TEST(Stage3, PermutationTableRecordedAndSized) {
    Workspace ws("perm");
    auto result = cmd_stage3(ws.config("run_perm"));
    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto perm = manifest.read_stream("stage3_permutations");
    ASSERT_EQ(perm.size(), 1u);
    EXPECT_EQ(perm[0].at("seed").get<uint64_t>(), 42u);
    EXPECT_EQ(perm[0].at("swap_flags").size(), 4u * 7u);
}

TEST(Stage3, MissingShardMarksRunPartialWithErrorRecord) {
    Workspace ws("partial");
    // A problem in a domain the library lacks: condition B must fail, the
    // run completes partial with an error record.
    ClusteredEmbedder embedder(16, 0.02);
    std::vector<json> records;
    for (DomainLabel d : kAllDomains) {
        if (d == DomainLabel::RL) continue;
        for (int i = 0; i < 4; ++i) {
            std::string sid = std::string("n") + domain_token(d) + std::to_string(i);
            records.push_back(json{{"seed_id", sid},
                                   {"paper_id", "p" + sid},
                                   {"problem", std::string(domain_token(d)) + " problem " +
                                                   std::to_string(i)},
                                   {"method", "m"},
                                   {"domain", domain_token(d)},
                                   {"venue", "V"},
                                   {"year", 2020}});
        }
    }
    auto library = ingest(records, embedder).library;
    save_library(library, ws.root / "lib2" / "seeds.jsonl", ws.root / "lib2" / "vectors.jsonl");
    write_text_file(ws.root / "problems_rl.jsonl",
                    json(testsupport::make_problem("qrl", DomainLabel::RL)).dump() + "\n");

    auto config = ws.config("run_partial");
    config.paths.library_seeds = (ws.root / "lib2" / "seeds.jsonl").string();
    config.paths.library_vectors = (ws.root / "lib2" / "vectors.jsonl").string();
    config.paths.problems = (ws.root / "problems_rl.jsonl").string();
    auto result = cmd_stage3(config);
    EXPECT_TRUE(result.partial);

    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto errors = manifest.read_stream("errors");
    ASSERT_GT(errors.size(), 0u);
    bool saw_b = false;
    for (const auto& e : errors) saw_b |= contains(e.at("cell").get<std::string>(), "/B");
    EXPECT_TRUE(saw_b);
}

TEST(Loop, ScriptedJudgesGiveSingleRoundTraces) {
    Workspace ws("loop");
    auto result = cmd_loop(ws.config("run_loop"));
    EXPECT_FALSE(result.partial);

    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto traces = manifest.read_stream("loop_traces");
    ASSERT_EQ(traces.size(), 8u);  // 4 problems x {C, D}
    for (const auto& t : traces) {
        EXPECT_GE(t.at("trace").at("rounds").size(), 1u);
        EXPECT_LE(t.at("trace").at("rounds").size(), 10u);
    }
    auto verdicts = manifest.read_stream("loop_pairwise");
    EXPECT_EQ(verdicts.size(), 4u * 3u);
    EXPECT_TRUE(fs::is_regular_file(manifest.report_path("loop_pairwise.txt")));
}

TEST(Walkthrough, ReportCarriesParaphrasesSlateAndCostLines) {
    Workspace ws("walk");
    auto config = ws.config("run_walk");
    config.walkthrough_with_ad = true;
    auto result = cmd_walkthrough(config, "q01");

    RunManifest manifest = RunManifest::open(result.manifest_dir);
    auto report = read_text_file(manifest.report_path("walkthrough_q01.txt"));

    int paraphrase_lines = 0;
    for (DomainLabel d : kAllDomains)
        if (contains(report, "[" + std::string(domain_token(d)) + "] ")) ++paraphrase_lines;
    EXPECT_EQ(paraphrase_lines, 7);

    auto walks = manifest.read_stream("walkthroughs");
    ASSERT_EQ(walks.size(), 1u);
    EXPECT_LE(walks[0].at("pool").at("pool").at("entries").size(), 21u);
    EXPECT_NE(report.find("Timing:"), std::string::npos);
    EXPECT_NE(report.find("Cost:"), std::string::npos);
    EXPECT_NE(report.find("Pairwise C vs A"), std::string::npos);
    EXPECT_NE(report.find("Pairwise C vs D"), std::string::npos);
}

TEST(Walkthrough, AttributionTableMergesMultiSeedPapers) {
    // Condition D pools skip paper dedup, so one paper can contribute two
    // seeds; their attributions merge into one row of the table.
    Workspace ws("merge");
    ClusteredEmbedder embedder(16, 0.02);
    std::vector<json> records;
    for (int i = 0; i < 22; ++i) {
        records.push_back(json{{"seed_id", "m" + std::to_string(100 + i)},
                               {"paper_id", i < 2 ? "shared_paper" : "p" + std::to_string(i)},
                               {"problem", "CV problem " + std::to_string(i)},
                               {"method", "m"},
                               {"domain", "CV"},
                               {"venue", "V"},
                               {"year", 2020}});
    }
    auto library = ingest(records, embedder).library;

    ConditionedPool pool;
    pool.condition = Condition::D;
    pool.pool.budget = 21;
    for (const auto& s : library.seeds())
        pool.pool.entries.push_back({s, kRandomControlLens, std::nullopt, 0.0});

    std::vector<Attribution> attrs = {{"m100", "aspect one"}, {"m101", "aspect two"}};
    std::vector<std::pair<std::string, std::vector<std::string>>> by_paper;
    for (const auto& attr : attrs) {
        const Seed& seed = library.at(attr.seed_id);
        bool found = false;
        for (auto& [paper, aspects] : by_paper)
            if (paper == seed.paper_id) {
                aspects.push_back(attr.borrowed_aspect);
                found = true;
            }
        if (!found) by_paper.push_back({seed.paper_id, {attr.borrowed_aspect}});
    }
    ASSERT_EQ(by_paper.size(), 1u);
    EXPECT_EQ(by_paper[0].first, "shared_paper");
    EXPECT_EQ(by_paper[0].second.size(), 2u);
}

TEST(Report, RegeneratesIdenticalTablesWithoutProviders) {
    Workspace ws("regen");
    auto result = cmd_stage3(ws.config("run_regen"));
    RunManifest manifest = RunManifest::open(result.manifest_dir);

    auto before = read_text_file(manifest.report_path("stage3_per_condition.txt"));
    fs::remove_all(result.manifest_dir / "reports");

    uint64_t net_before = network_request_count().load();
    cmd_report(result.manifest_dir);
    EXPECT_EQ(network_request_count().load(), net_before);
    auto after = read_text_file(manifest.report_path("stage3_per_condition.txt"));
    EXPECT_EQ(before, after);
}

TEST(Determinism, TwoMockRunsAgreeModuloTimestamps) {
    Workspace ws("det");
    auto a2 = cmd_stage2(ws.config("det_stage2_a"));
    auto b2 = cmd_stage2(ws.config("det_stage2_b"));
    EXPECT_EQ(normalized_manifest(a2.manifest_dir).dump(),
              normalized_manifest(b2.manifest_dir).dump());

    auto a3 = cmd_stage3(ws.config("det_stage3_a"));
    auto b3 = cmd_stage3(ws.config("det_stage3_b"));
    EXPECT_EQ(normalized_manifest(a3.manifest_dir).dump(),
              normalized_manifest(b3.manifest_dir).dump());
}

TEST(Determinism, EveryRemainingCommandIsByteDeterministic) {
    Workspace ws("detall");
    auto a1 = cmd_stage1(ws.config("det_s1_a"));
    auto b1 = cmd_stage1(ws.config("det_s1_b"));
    EXPECT_EQ(normalized_manifest(a1.manifest_dir).dump(),
              normalized_manifest(b1.manifest_dir).dump());

    auto al = cmd_loop(ws.config("det_loop_a"));
    auto bl = cmd_loop(ws.config("det_loop_b"));
    EXPECT_EQ(normalized_manifest(al.manifest_dir).dump(),
              normalized_manifest(bl.manifest_dir).dump());

    auto aw = cmd_walkthrough(ws.config("det_walk_a"), "q01");
    auto bw = cmd_walkthrough(ws.config("det_walk_b"), "q01");
    EXPECT_EQ(normalized_manifest(aw.manifest_dir).dump(),
              normalized_manifest(bw.manifest_dir).dump());
}

TEST(Determinism, ConcurrentRunMatchesSerialRun) {
    Workspace ws("conc");
    auto serial = cmd_stage3(ws.config("conc_serial"));
    auto config = ws.config("conc_parallel");
    config.concurrency = 4;
    auto parallel = cmd_stage3(config);
    EXPECT_EQ(normalized_manifest(serial.manifest_dir).dump(),
              normalized_manifest(parallel.manifest_dir).dump());
}

TEST(Config, DefaultsMatchThePinnedConstants) {
    RunConfig config;
    EXPECT_EQ(config.k, 3u);
    EXPECT_EQ(config.budget, 21u);
    EXPECT_EQ(config.loop_threshold, 4);
    EXPECT_EQ(config.loop_max_rounds, 10);
    EXPECT_EQ(config.condition_rng_seed, 0u);
    EXPECT_EQ(config.pairwise_rng_seed, 42u);
}
