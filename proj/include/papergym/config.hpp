#pragma once

#include <string>

#include <papergym/util.hpp>

namespace papergym {

enum class ProviderMode { live, mock, cached };

inline const char* provider_mode_name(ProviderMode m) {
    switch (m) {
        case ProviderMode::live: return "live";
        case ProviderMode::mock: return "mock";
        case ProviderMode::cached: return "cached";
    }
    throw Error("provider_mode_name: bad mode");
}

inline ProviderMode parse_provider_mode(const std::string& s) {
    if (s == "live") return ProviderMode::live;
    if (s == "mock") return ProviderMode::mock;
    if (s == "cached") return ProviderMode::cached;
    throw ConfigError("unknown provider mode: " + s);
}

struct RunPaths {
    std::string library_seeds;
    std::string library_vectors;
    std::string problems;
    std::string papers_dir;
    std::string templates_dir = "templates";
    std::string output_dir = "runs/out";
    std::string cache_dir = "runs/cache";
};

// Defaults are the benchmark's pinned constants: k=3, budget 21, loop
// threshold 4 with up to 10 rounds, condition-D sampling at seed 0, pairwise
// position randomization at seed 42.
struct RunConfig {
    size_t k = 3;
    size_t budget = 21;
    int loop_threshold = 4;
    int loop_max_rounds = 10;
    uint64_t condition_rng_seed = 0;
    uint64_t pairwise_rng_seed = 42;
    ProviderMode provider_mode = ProviderMode::mock;
    int concurrency = 1;
    RunPaths paths;

    std::string generator_model = "scripted-mock";
    std::string judge_model = "scripted-mock";
    std::string embedder_kind = "clustered";  // "clustered" | "hash" | live model name
    size_t embed_dim = 16;
    double temperature = 0.0;
    int retry_attempts = 3;
    int64_t retry_base_delay_ms = 250;

    int max_searches = 10;      // novelty-judge search rounds
    int step_budget = 40;       // extraction tool calls per paper
    size_t tool_output_cap = 8000;
    int64_t bash_timeout_ms = 10000;
    int year_min = 2017;
    int year_max = 2025;

    bool negative_control = false;   // stage1 shuffled-paper grounding control
    bool full_pairwise_grid = false; // stage3: all pairs instead of C-centered
    bool walkthrough_with_ad = false;

    // Informational cost model; never gates anything.
    double price_in_per_mtok = 0.0;
    double price_out_per_mtok = 0.0;
};

inline json config_to_json(const RunConfig& c) {
    return json{{"k", c.k},
                {"budget", c.budget},
                {"loop_threshold", c.loop_threshold},
                {"loop_max_rounds", c.loop_max_rounds},
                {"condition_rng_seed", c.condition_rng_seed},
                {"pairwise_rng_seed", c.pairwise_rng_seed},
                {"provider_mode", provider_mode_name(c.provider_mode)},
                {"concurrency", c.concurrency},
                {"paths",
                 {{"library_seeds", c.paths.library_seeds},
                  {"library_vectors", c.paths.library_vectors},
                  {"problems", c.paths.problems},
                  {"papers_dir", c.paths.papers_dir},
                  {"templates_dir", c.paths.templates_dir},
                  {"output_dir", c.paths.output_dir},
                  {"cache_dir", c.paths.cache_dir}}},
                {"generator_model", c.generator_model},
                {"judge_model", c.judge_model},
                {"embedder_kind", c.embedder_kind},
                {"embed_dim", c.embed_dim},
                {"temperature", c.temperature},
                {"retry_attempts", c.retry_attempts},
                {"retry_base_delay_ms", c.retry_base_delay_ms},
                {"max_searches", c.max_searches},
                {"step_budget", c.step_budget},
                {"tool_output_cap", c.tool_output_cap},
                {"bash_timeout_ms", c.bash_timeout_ms},
                {"year_min", c.year_min},
                {"year_max", c.year_max},
                {"negative_control", c.negative_control},
                {"full_pairwise_grid", c.full_pairwise_grid},
                {"walkthrough_with_ad", c.walkthrough_with_ad},
                {"rng_algorithm", kRngAlgorithmName},
                {"price_in_per_mtok", c.price_in_per_mtok},
                {"price_out_per_mtok", c.price_out_per_mtok}};
}

}  // namespace papergym
