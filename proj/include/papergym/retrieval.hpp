#pragma once

#include <optional>
#include <string>
#include <vector>

#include <papergym/providers.hpp>
#include <papergym/seed_store.hpp>
#include <papergym/templates.hpp>

namespace papergym {

// A benchmark research problem: a stated gap plus a directional question.
struct Problem {
    std::string problem_id;
    std::string text;
    DomainLabel natural_domain = DomainLabel::CV;
};

inline void to_json(json& j, const Problem& p) {
    j = json{{"problem_id", p.problem_id}, {"text", p.text},
             {"domain", domain_token(p.natural_domain)}};
}

inline void from_json(const json& j, Problem& p) {
    j.at("problem_id").get_to(p.problem_id);
    j.at("text").get_to(p.text);
    p.natural_domain = parse_domain(j.at("domain").get<std::string>());
    if (trim(p.text).empty()) throw ValidationError("problem " + p.problem_id + ": empty text");
}

struct Paraphrase {
    std::string problem_id;
    DomainLabel target_domain = DomainLabel::CV;
    std::string text;
};

inline void to_json(json& j, const Paraphrase& p) {
    j = json{{"problem_id", p.problem_id}, {"target_domain", domain_token(p.target_domain)},
             {"text", p.text}};
}

struct ProbeResult {
    DomainLabel target_domain = DomainLabel::CV;
    std::string lens_text;  // the exact text embedded for this probe
    std::vector<ScoredSeed> hits;
};

inline void to_json(json& j, const ProbeResult& p) {
    j = json{{"target_domain", domain_token(p.target_domain)}, {"lens_text", p.lens_text},
             {"hits", p.hits}};
}

struct PoolEntry {
    Seed seed;
    std::string lens_text;
    std::optional<DomainLabel> source_probe;  // absent for the random control
    double score = 0.0;
};

inline void to_json(json& j, const PoolEntry& e) {
    j = json{{"seed", e.seed}, {"lens_text", e.lens_text},
             {"source_probe", e.source_probe ? json(domain_token(*e.source_probe)) : json()},
             {"score", e.score}};
}

// Ordered, paper-deduplicated set of retrieved seeds, each carrying its lens.
struct SeedPool {
    std::vector<PoolEntry> entries;
    size_t budget = 0;
};

inline void to_json(json& j, const SeedPool& p) {
    j = json{{"entries", p.entries}, {"budget", p.budget}};
}

// Number of distinct ML domains (0 to 7) among the pooled seeds.
inline int coverage(const SeedPool& pool) {
    std::set<DomainLabel> domains;
    for (const auto& e : pool.entries) domains.insert(e.seed.domain);
    return static_cast<int>(domains.size());
}

// ---------------------------------------------------------------------------
// Paraphrasing
// ---------------------------------------------------------------------------

// Seven probe texts, one per domain in canonical order. The natural domain is
// probed with the raw problem statement; the other six are provider-generated
// restatements in each domain's vocabulary.
inline std::vector<Paraphrase> paraphrase_all(const Problem& problem, ChatProvider& chat,
                                              const TemplateStore& templates) {
    std::vector<Paraphrase> out;
    for (DomainLabel d : kAllDomains) {
        Paraphrase p;
        p.problem_id = problem.problem_id;
        p.target_domain = d;
        if (d == problem.natural_domain) {
            p.text = problem.text;
        } else {
            ChatRequest req;
            req.purpose = "paraphrase";
            req.template_version = templates.get("paraphrase").version;
            req.params = {{"problem_id", problem.problem_id}, {"target_domain", domain_token(d)}};
            req.messages = {{"user", templates.render("paraphrase",
                                                      {{"problem_id", problem.problem_id},
                                                       {"target_domain", domain_token(d)},
                                                       {"target_domain_pretty", domain_pretty(d)},
                                                       {"problem_text", problem.text}})}};
            std::string text;
            try {
                text = trim(chat.chat(req).content);
            } catch (const ProviderError& e) {
                throw ProviderError("paraphrase failed for problem " + problem.problem_id +
                                        ", domain " + domain_token(d) + ": " + e.what(),
                                    e.fingerprint, false);
            }
            if (text.empty())
                throw ProviderError("paraphrase failed for problem " + problem.problem_id +
                                    ", domain " + std::string(domain_token(d)) +
                                    ": provider returned empty text");
            p.text = text;
        }
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pool construction
// ---------------------------------------------------------------------------

struct PoolBuild {
    SeedPool pool;
    std::vector<ProbeResult> probes;
    std::vector<std::string> warnings;
};

namespace retrieval_detail {

// Deterministic fold: probes in canonical domain order, pool-level dedup
// keeping the first occurrence of each paper.
inline PoolBuild merge_probes(std::vector<ProbeResult> probes, size_t budget,
                              const SeedLibrary& library) {
    PoolBuild out;
    out.pool.budget = budget;
    std::set<std::string> seen_papers;
    for (auto& probe : probes) {
        for (const auto& hit : probe.hits) {
            const Seed& seed = library.at(hit.seed_id);
            if (!seen_papers.insert(seed.paper_id).second) continue;
            out.pool.entries.push_back({seed, probe.lens_text, probe.target_domain, hit.score});
        }
    }
    if (out.pool.entries.size() > budget)
        throw ValidationError("pool exceeded budget: " + std::to_string(out.pool.entries.size()));
    out.probes = std::move(probes);
    return out;
}

}  // namespace retrieval_detail

// Cross-domain retrieval: seven probes over the global library (one per
// paraphrase), merged with paper-id deduplication; |pool| <= 7*k.
inline PoolBuild retrieve_pool(const Problem& problem, const std::vector<Paraphrase>& paraphrases,
                               const SeedLibrary& library, size_t k,
                               EmbeddingProvider& embedder) {
    if (k == 0) throw ValidationError("retrieve_pool: k must be >= 1");
    if (paraphrases.size() != kDomainCount)
        throw ValidationError("retrieve_pool: expected " + std::to_string(kDomainCount) +
                              " paraphrases, got " + std::to_string(paraphrases.size()));
    for (size_t i = 0; i < kAllDomains.size(); ++i) {
        if (paraphrases[i].target_domain != kAllDomains[i])
            throw ValidationError("retrieve_pool: paraphrases out of canonical domain order");
    }

    if (library.empty()) {
        PoolBuild out;
        out.pool.budget = kDomainCount * k;
        out.warnings.push_back("retrieve_pool: empty library, empty pool");
        return out;
    }

    std::vector<std::string> lens_texts;
    for (const auto& p : paraphrases) lens_texts.push_back(p.text);
    auto queries = embedder.embed(lens_texts);

    std::vector<ProbeResult> probes;
    for (size_t i = 0; i < paraphrases.size(); ++i) {
        ProbeResult probe;
        probe.target_domain = paraphrases[i].target_domain;
        probe.lens_text = paraphrases[i].text;
        probe.hits = scan_topk(queries[i], k, library);
        probes.push_back(std::move(probe));
    }
    return retrieval_detail::merge_probes(std::move(probes), kDomainCount * k, library);
}

// Single-probe baseline: one probe with the raw problem statement as lens,
// top-`budget` after paper-id dedup.
inline PoolBuild single_probe_pool(const Problem& problem, const SeedLibrary& library,
                                   size_t budget, EmbeddingProvider& embedder) {
    if (budget == 0) throw ValidationError("single_probe_pool: budget must be >= 1");
    if (library.empty()) {
        PoolBuild out;
        out.pool.budget = budget;
        out.warnings.push_back("single_probe_pool: empty library, empty pool");
        return out;
    }
    auto query = embedder.embed({problem.text})[0];
    ProbeResult probe;
    probe.target_domain = problem.natural_domain;
    probe.lens_text = problem.text;
    probe.hits = scan_topk(query, budget, library);
    return retrieval_detail::merge_probes({std::move(probe)}, budget, library);
}

}  // namespace papergym
