#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <papergym/domain.hpp>
#include <papergym/providers.hpp>
#include <papergym/util.hpp>

namespace papergym {

// A (problem, method, domain) summary extracted from one paper; the
// retrieval atom.
struct Seed {
    std::string seed_id;
    std::string paper_id;
    std::string problem;
    std::string method;
    DomainLabel domain = DomainLabel::CV;
    std::string venue;
    int year = 0;
};

inline void to_json(json& j, const Seed& s) {
    j = json{{"seed_id", s.seed_id}, {"paper_id", s.paper_id}, {"problem", s.problem},
             {"method", s.method},   {"domain", domain_token(s.domain)},
             {"venue", s.venue},     {"year", s.year}};
}

inline void from_json(const json& j, Seed& s) {
    j.at("seed_id").get_to(s.seed_id);
    j.at("paper_id").get_to(s.paper_id);
    j.at("problem").get_to(s.problem);
    j.at("method").get_to(s.method);
    s.domain = parse_domain(j.at("domain").get<std::string>());
    s.venue = j.value("venue", "");
    s.year = j.value("year", 0);
}

// Publication-year window for library ingestion; out-of-window years warn
// rather than reject.
struct IngestOptions {
    int year_min = 2017;
    int year_max = 2025;
};

struct ScoredSeed {
    std::string seed_id;
    double score = 0.0;
    bool operator==(const ScoredSeed&) const = default;
};

inline void to_json(json& j, const ScoredSeed& s) {
    j = json{{"seed_id", s.seed_id}, {"score", s.score}};
}

// Immutable after ingestion: concurrent readers need no coordination.
class SeedLibrary {
public:
    SeedLibrary() = default;

    SeedLibrary(std::vector<Seed> seeds, std::vector<std::vector<double>> embeddings)
        : seeds_(std::move(seeds)), embeddings_(std::move(embeddings)) {
        if (seeds_.size() != embeddings_.size())
            throw ValidationError("library: seed/embedding count mismatch");
        if (!embeddings_.empty()) dim_ = embeddings_[0].size();
        for (size_t i = 0; i < seeds_.size(); ++i) {
            if (embeddings_[i].size() != dim_)
                throw ValidationError("library: embedding dimension mismatch at seed " +
                                      seeds_[i].seed_id);
            double norm = 0.0;
            for (double x : embeddings_[i]) norm += x * x;
            if (std::abs(std::sqrt(norm) - 1.0) > 1e-6)
                throw ValidationError("library: embedding for " + seeds_[i].seed_id +
                                      " is not unit-norm");
            if (!index_.emplace(seeds_[i].seed_id, i).second)
                throw ValidationError("library: duplicate seed_id " + seeds_[i].seed_id);
        }
    }

    size_t size() const { return seeds_.size(); }
    bool empty() const { return seeds_.empty(); }
    size_t dim() const { return dim_; }
    const std::vector<Seed>& seeds() const { return seeds_; }

    const Seed* find(const std::string& seed_id) const {
        auto it = index_.find(seed_id);
        return it == index_.end() ? nullptr : &seeds_[it->second];
    }

    const Seed& at(const std::string& seed_id) const {
        const Seed* s = find(seed_id);
        if (!s) throw ValidationError("library: unknown seed_id " + seed_id);
        return *s;
    }

    const std::vector<double>& embedding(const std::string& seed_id) const {
        auto it = index_.find(seed_id);
        if (it == index_.end()) throw ValidationError("library: unknown seed_id " + seed_id);
        return embeddings_[it->second];
    }

    std::map<DomainLabel, size_t> domain_counts() const {
        std::map<DomainLabel, size_t> counts;
        for (const auto& s : seeds_) counts[s.domain]++;
        return counts;
    }

    // Full descending-cosine ranking with ascending-seed_id tie break,
    // filtered to seeds matching `pred`, then reduced to the first-ranked
    // seed per paper. scan_topk results are prefixes of this ranking.
    template <typename Pred>
    std::vector<ScoredSeed> ranked_scan(const std::vector<double>& query, Pred pred) const {
        if (empty()) return {};
        if (query.size() != dim_)
            throw ValidationError("scan: query dimension " + std::to_string(query.size()) +
                                  " != library dimension " + std::to_string(dim_));
        std::vector<size_t> order;
        std::vector<double> scores(seeds_.size(), 0.0);
        for (size_t i = 0; i < seeds_.size(); ++i) {
            if (!pred(seeds_[i])) continue;
            double dot = 0.0;
            const auto& v = embeddings_[i];
            for (size_t d = 0; d < dim_; ++d) dot += v[d] * query[d];
            scores[i] = dot;
            order.push_back(i);
        }
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return seeds_[a].seed_id < seeds_[b].seed_id;
        });
        std::vector<ScoredSeed> out;
        std::set<std::string> seen_papers;
        for (size_t i : order) {
            if (!seen_papers.insert(seeds_[i].paper_id).second) continue;
            out.push_back({seeds_[i].seed_id, scores[i]});
        }
        return out;
    }

private:
    std::vector<Seed> seeds_;
    std::vector<std::vector<double>> embeddings_;
    std::unordered_map<std::string, size_t> index_;
    size_t dim_ = 0;
};

// Exact top-k by cosine similarity. Ties break by ascending seed_id; only the
// first-ranked seed per paper survives before the top-k cut.
inline std::vector<ScoredSeed> scan_topk(const std::vector<double>& query, size_t k,
                                         const SeedLibrary& library) {
    if (k == 0) throw ValidationError("scan_topk: k must be >= 1");
    auto ranking = library.ranked_scan(query, [](const Seed&) { return true; });
    if (ranking.size() > k) ranking.resize(k);
    return ranking;
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct IngestResult {
    SeedLibrary library;
    std::vector<std::string> warnings;
};

inline Seed parse_seed_record(const json& record, size_t ordinal) {
    Seed s;
    try {
        record.get_to(s);
    } catch (const json::exception& e) {
        throw ValidationError("record " + std::to_string(ordinal + 1) + ": " + e.what());
    }
    const std::string where = "record " + std::to_string(ordinal + 1) +
                              (s.seed_id.empty() ? "" : " (" + s.seed_id + ")");
    if (s.seed_id.empty()) throw ValidationError(where + ": empty seed_id");
    if (s.paper_id.empty()) throw ValidationError(where + ": empty paper_id");
    if (trim(s.problem).empty()) throw ValidationError(where + ": empty problem text");
    if (trim(s.method).empty()) throw ValidationError(where + ": empty method text");
    return s;
}

// Builds the library from raw seed records. Embeddings are computed from each
// seed's problem text (retrieval works by problem-statement similarity) and
// normalized to unit norm.
inline IngestResult ingest(const std::vector<json>& records, EmbeddingProvider& embedder,
                           const IngestOptions& options = {}) {
    IngestResult result;
    std::vector<Seed> seeds;
    std::set<std::string> ids;
    for (size_t i = 0; i < records.size(); ++i) {
        Seed s = parse_seed_record(records[i], i);
        if (!ids.insert(s.seed_id).second)
            throw ValidationError("duplicate seed_id: " + s.seed_id);
        if (s.year < options.year_min || s.year > options.year_max)
            result.warnings.push_back("seed " + s.seed_id + ": year " + std::to_string(s.year) +
                                      " outside [" + std::to_string(options.year_min) + ", " +
                                      std::to_string(options.year_max) + "]");
        seeds.push_back(std::move(s));
    }
    if (seeds.empty()) {
        result.library = SeedLibrary({}, {});
        return result;
    }

    std::vector<std::string> texts;
    texts.reserve(seeds.size());
    for (const auto& s : seeds) texts.push_back(s.problem);
    auto vectors = embedder.embed(texts);
    if (vectors.size() != seeds.size())
        throw ProviderError("embedder returned " + std::to_string(vectors.size()) +
                            " vectors for " + std::to_string(seeds.size()) + " texts");
    const size_t dim = vectors.empty() ? 0 : vectors[0].size();
    for (size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() != dim)
            throw ValidationError("embedding dimension mismatch in batch at seed " +
                                  seeds[i].seed_id);
        double norm = 0.0;
        for (double x : vectors[i]) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12)
            throw ValidationError("zero embedding for seed " + seeds[i].seed_id);
        for (auto& x : vectors[i]) x /= norm;
    }
    result.library = SeedLibrary(std::move(seeds), std::move(vectors));
    return result;
}

// ---------------------------------------------------------------------------
// Storage: seeds as JSONL, vectors in a sidecar with a dim header
// ---------------------------------------------------------------------------

inline void save_library(const SeedLibrary& library, const std::filesystem::path& seeds_path,
                         const std::filesystem::path& vectors_path) {
    std::string seed_lines, vec_lines;
    vec_lines += json{{"dim", library.dim()}, {"count", library.size()}}.dump() + "\n";
    for (const auto& s : library.seeds()) {
        seed_lines += json(s).dump() + "\n";
        vec_lines += json{{"seed_id", s.seed_id}, {"vec", library.embedding(s.seed_id)}}.dump() + "\n";
    }
    write_text_file(seeds_path, seed_lines);
    write_text_file(vectors_path, vec_lines);
}

inline SeedLibrary load_library(const std::filesystem::path& seeds_path,
                                const std::filesystem::path& vectors_path) {
    std::vector<Seed> seeds;
    for (size_t i = 0; const auto& rec : read_jsonl(seeds_path)) seeds.push_back(parse_seed_record(rec, i++));

    auto vec_records = read_jsonl(vectors_path);
    if (vec_records.empty() || !vec_records[0].contains("dim"))
        throw ValidationError(vectors_path.string() + ": missing dim header");
    const size_t dim = vec_records[0].at("dim").get<size_t>();

    std::unordered_map<std::string, std::vector<double>> by_id;
    for (size_t i = 1; i < vec_records.size(); ++i) {
        const auto& rec = vec_records[i];
        std::string id = rec.at("seed_id").get<std::string>();
        auto vec = rec.at("vec").get<std::vector<double>>();
        if (vec.size() != dim)
            throw ValidationError(vectors_path.string() + ": vector for " + id +
                                  " has dimension " + std::to_string(vec.size()) +
                                  ", header says " + std::to_string(dim));
        if (!by_id.emplace(std::move(id), std::move(vec)).second)
            throw ValidationError(vectors_path.string() + ": duplicate vector for seed " +
                                  rec.at("seed_id").get<std::string>());
    }

    std::vector<std::vector<double>> embeddings;
    embeddings.reserve(seeds.size());
    for (const auto& s : seeds) {
        auto it = by_id.find(s.seed_id);
        if (it == by_id.end())
            throw ValidationError("no vector for seed " + s.seed_id + " in " + vectors_path.string());
        embeddings.push_back(std::move(it->second));
        by_id.erase(it);
    }
    if (!by_id.empty())
        throw ValidationError(vectors_path.string() + ": vector for unknown seed " +
                              by_id.begin()->first);
    return SeedLibrary(std::move(seeds), std::move(embeddings));
}

}  // namespace papergym
