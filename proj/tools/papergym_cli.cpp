// Command-line entry points for the ideation pipeline: ingest, stage1,
// stage2, stage3, loop, walkthrough, report.
//
// Exit codes: 0 success, 2 configuration error, 3 provider error,
// 4 partial run (some cells incomplete; manifest is resumable).

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <papergym/orchestrator.hpp>

using namespace papergym;

namespace {

void add_common_flags(CLI::App* cmd, RunConfig& config, std::string& provider) {
    cmd->add_option("--k", config.k, "Top-k per retrieval probe");
    cmd->add_option("--budget", config.budget, "Seed budget for single-probe, B, and D pools");
    cmd->add_option("--threshold", config.loop_threshold, "Novelty-loop pass threshold");
    cmd->add_option("--max-rounds", config.loop_max_rounds, "Novelty-loop round cap");
    cmd->add_option("--condition-seed", config.condition_rng_seed,
                    "RNG seed for the condition-D uniform draw");
    cmd->add_option("--pairwise-seed", config.pairwise_rng_seed,
                    "RNG seed for pairwise position randomization");
    cmd->add_option("--provider", provider, "Provider mode: mock, cached, or live")
        ->check(CLI::IsMember({"mock", "cached", "live"}));
    cmd->add_option("--concurrency", config.concurrency, "Worker bound for pipeline cells");
    cmd->add_option("--library-seeds", config.paths.library_seeds, "Seed JSONL path");
    cmd->add_option("--library-vectors", config.paths.library_vectors, "Vector sidecar path");
    cmd->add_option("--problems", config.paths.problems, "Problems JSONL path");
    cmd->add_option("--papers", config.paths.papers_dir, "Directory of paper bundles");
    cmd->add_option("--templates", config.paths.templates_dir, "Prompt template directory");
    cmd->add_option("--out", config.paths.output_dir, "Run manifest directory");
    cmd->add_option("--cache-dir", config.paths.cache_dir, "Response cache directory");
    cmd->add_option("--generator-model", config.generator_model, "Generator model name");
    cmd->add_option("--judge-model", config.judge_model, "Judge model name");
    cmd->add_option("--embedder", config.embedder_kind,
                    "Embedder: clustered, hash, or a live embedding model name");
    cmd->add_option("--embed-dim", config.embed_dim, "Embedding dimension");
    cmd->add_option("--max-searches", config.max_searches, "Novelty-judge search cap");
    cmd->add_option("--step-budget", config.step_budget, "Extraction tool-call budget per paper");
    cmd->add_option("--retries", config.retry_attempts, "Provider retry attempts");
    cmd->add_option("--price-in", config.price_in_per_mtok, "USD per 1M input tokens (reporting)");
    cmd->add_option("--price-out", config.price_out_per_mtok,
                    "USD per 1M output tokens (reporting)");
}

int finish(const CommandResult& result) {
    std::cout << "manifest: " << result.manifest_dir.string() << "\n";
    if (result.partial) {
        std::cout << "run is partial; re-run the same command to resume\n";
        return 4;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"papergym: cross-domain research-ideation pipeline"};
    app.require_subcommand(1);

    RunConfig config;
    std::string provider = "mock";
    std::string records_path;
    std::string problem_id;
    std::string manifest_dir;

    auto* ingest_cmd = app.add_subcommand("ingest", "Embed seed records into a library");
    ingest_cmd->add_option("--records", records_path, "Raw seed records JSONL")->required();
    add_common_flags(ingest_cmd, config, provider);

    auto* stage1_cmd = app.add_subcommand("stage1", "Paired tooled/direct extraction ablation");
    add_common_flags(stage1_cmd, config, provider);
    stage1_cmd->add_flag("--negative-control", config.negative_control,
                         "Re-judge grounding against shuffled paper pairings");

    auto* stage2_cmd = app.add_subcommand("stage2", "Retrieval modes: paraphrase vs single probe");
    add_common_flags(stage2_cmd, config, provider);

    auto* stage3_cmd = app.add_subcommand("stage3", "A/B/C/D synthesis grid with judging");
    add_common_flags(stage3_cmd, config, provider);
    stage3_cmd->add_flag("--full-grid", config.full_pairwise_grid,
                         "All pairwise axes for every C-centered pair");

    auto* loop_cmd = app.add_subcommand("loop", "Novelty-guided iteration, C and D");
    add_common_flags(loop_cmd, config, provider);

    auto* walk_cmd = app.add_subcommand("walkthrough", "Single-problem condition-C trace");
    walk_cmd->add_option("--problem", problem_id, "Problem id to trace")->required();
    add_common_flags(walk_cmd, config, provider);
    walk_cmd->add_flag("--with-ad", config.walkthrough_with_ad,
                       "Also synthesize conditions A and D and compare pairwise");

    auto* report_cmd = app.add_subcommand("report", "Regenerate tables from a manifest");
    report_cmd->add_option("--manifest", manifest_dir, "Existing manifest directory")->required();

    CLI11_PARSE(app, argc, argv);
    config.provider_mode = parse_provider_mode(provider);

    try {
        if (ingest_cmd->parsed()) {
            json out = cmd_ingest(config, records_path);
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (stage1_cmd->parsed()) return finish(cmd_stage1(config));
        if (stage2_cmd->parsed()) return finish(cmd_stage2(config));
        if (stage3_cmd->parsed()) return finish(cmd_stage3(config));
        if (loop_cmd->parsed()) return finish(cmd_loop(config));
        if (walk_cmd->parsed()) {
            auto result = cmd_walkthrough(config, problem_id);
            std::cout << read_text_file(
                RunManifest::open(result.manifest_dir)
                    .report_path("walkthrough_" + problem_id + ".txt"));
            return finish(result);
        }
        if (report_cmd->parsed()) return finish(cmd_report(manifest_dir));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
