#pragma once

#include <optional>
#include <string>
#include <vector>

#include <papergym/retrieval.hpp>

namespace papergym {

enum class Condition { A, B, C, D };

inline const char* condition_name(Condition c) {
    switch (c) {
        case Condition::A: return "A";
        case Condition::B: return "B";
        case Condition::C: return "C";
        case Condition::D: return "D";
    }
    throw Error("condition_name: bad condition");
}

inline Condition parse_condition(const std::string& s) {
    if (s == "A" || s == "a") return Condition::A;
    if (s == "B" || s == "b") return Condition::B;
    if (s == "C" || s == "c") return Condition::C;
    if (s == "D" || s == "d") return Condition::D;
    throw ValidationError("unknown condition: " + s);
}

// Lens text shown for every seed of the random control.
inline constexpr const char* kRandomControlLens = "(uniform random sample of the library)";

struct ConditionedPool {
    Condition condition = Condition::A;
    SeedPool pool;  // empty for A
    uint64_t rng_seed = 0;  // recorded when sampling occurred (condition D)
};

inline void to_json(json& j, const ConditionedPool& c) {
    j = json{{"condition", condition_name(c.condition)},
             {"pool", c.pool},
             {"rng_seed", c.rng_seed},
             {"rng_algorithm", kRngAlgorithmName}};
}

struct ConditionBuild {
    ConditionedPool conditioned;
    std::vector<Paraphrase> paraphrases;  // condition C only
    std::vector<ProbeResult> probes;      // conditions B and C
    std::vector<std::string> warnings;
};

// Builds one ablation pool:
//   A: no retrieval, empty pool.
//   B: same-domain retrieval, top-`budget` from the problem's domain,
//      lens = raw problem statement.
//   C: cross-domain retrieval, top-k per paraphrase probe, lens = the
//      paraphrase text (raw problem for the natural-domain slot).
//   D: `budget` seeds drawn uniformly without replacement at rng_seed,
//      lens = "(uniform random sample of the library)".
inline ConditionBuild build_condition(Condition cond, const Problem& problem,
                                      const SeedLibrary& library, size_t k, size_t budget,
                                      uint64_t rng_seed, EmbeddingProvider& embedder,
                                      ChatProvider& chat, const TemplateStore& templates) {
    ConditionBuild out;
    out.conditioned.condition = cond;
    out.conditioned.rng_seed = rng_seed;

    switch (cond) {
        case Condition::A: {
            out.conditioned.pool.budget = 0;
            return out;
        }
        case Condition::B: {
            auto query = embedder.embed({problem.text})[0];
            auto ranking = library.ranked_scan(query, [&](const Seed& s) {
                return s.domain == problem.natural_domain;
            });
            if (ranking.empty())
                throw ValidationError("condition B: library has no seeds in domain " +
                                      std::string(domain_token(problem.natural_domain)));
            if (ranking.size() > budget) ranking.resize(budget);
            ProbeResult probe;
            probe.target_domain = problem.natural_domain;
            probe.lens_text = problem.text;
            probe.hits = std::move(ranking);
            auto build = retrieval_detail::merge_probes({std::move(probe)}, budget, library);
            out.conditioned.pool = std::move(build.pool);
            out.probes = std::move(build.probes);
            return out;
        }
        case Condition::C: {
            out.paraphrases = paraphrase_all(problem, chat, templates);
            auto build = retrieve_pool(problem, out.paraphrases, library, k, embedder);
            out.conditioned.pool = std::move(build.pool);
            out.probes = std::move(build.probes);
            out.warnings = std::move(build.warnings);
            return out;
        }
        case Condition::D: {
            if (library.size() < budget)
                throw ValidationError("condition D: library has " +
                                      std::to_string(library.size()) + " seeds, needs " +
                                      std::to_string(budget));
            // Draw from seeds ordered by seed_id so the sample depends on the
            // library contents, not on file order.
            std::vector<const Seed*> ordered;
            ordered.reserve(library.size());
            for (const auto& s : library.seeds()) ordered.push_back(&s);
            std::sort(ordered.begin(), ordered.end(),
                      [](const Seed* a, const Seed* b) { return a->seed_id < b->seed_id; });
            auto picks = sample_without_replacement(budget, ordered.size(), rng_seed);
            out.conditioned.pool.budget = budget;
            for (size_t i : picks)
                out.conditioned.pool.entries.push_back(
                    {*ordered[i], kRandomControlLens, std::nullopt, 0.0});
            return out;
        }
    }
    throw Error("build_condition: bad condition");
}

// ---------------------------------------------------------------------------
// Attribution coverage
// ---------------------------------------------------------------------------

// One synthesizer citation: a pool seed plus the aspect borrowed from it.
struct Attribution {
    std::string seed_id;
    std::string borrowed_aspect;
};

inline void to_json(json& j, const Attribution& a) {
    j = json{{"seed_id", a.seed_id}, {"borrowed_aspect", a.borrowed_aspect}};
}
inline void from_json(const json& j, Attribution& a) {
    j.at("seed_id").get_to(a.seed_id);
    j.at("borrowed_aspect").get_to(a.borrowed_aspect);
}

struct AttributionAudit {
    int distinct_domains = 0;
    std::vector<std::string> dangling_seed_ids;  // attributions not resolvable in the pool
};

inline AttributionAudit audit_attributions(const std::vector<Attribution>& inspired_by,
                                           const ConditionedPool& pool) {
    AttributionAudit out;
    std::set<DomainLabel> domains;
    for (const auto& attr : inspired_by) {
        const PoolEntry* found = nullptr;
        for (const auto& e : pool.pool.entries) {
            if (e.seed.seed_id == attr.seed_id) {
                found = &e;
                break;
            }
        }
        if (!found) {
            out.dangling_seed_ids.push_back(attr.seed_id);
            continue;
        }
        domains.insert(found->seed.domain);
    }
    out.distinct_domains = static_cast<int>(domains.size());
    return out;
}

// Distinct-domain count over the seeds the synthesizer explicitly attributes.
inline int attributed_domain_coverage(const std::vector<Attribution>& inspired_by,
                                      const ConditionedPool& pool) {
    return audit_attributions(inspired_by, pool).distinct_domains;
}

}  // namespace papergym
