#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <thread>

#include <papergym/config.hpp>
#include <papergym/conditions.hpp>
#include <papergym/extraction.hpp>
#include <papergym/judges.hpp>
#include <papergym/manifest.hpp>
#include <papergym/providers.hpp>
#include <papergym/providers_http.hpp>
#include <papergym/providers_mock.hpp>
#include <papergym/reports.hpp>
#include <papergym/retrieval.hpp>
#include <papergym/seed_store.hpp>
#include <papergym/stats.hpp>
#include <papergym/synthesis.hpp>
#include <papergym/templates.hpp>

namespace papergym {

// ---------------------------------------------------------------------------
// Provider assembly
// ---------------------------------------------------------------------------

class MeteringChatProvider : public ChatProvider {
public:
    MeteringChatProvider(std::shared_ptr<ChatProvider> inner, std::shared_ptr<CostMeter> meter)
        : inner_(std::move(inner)), meter_(std::move(meter)) {}
    ChatResponse chat(const ChatRequest& req) override {
        ChatResponse resp = inner_->chat(req);
        if (meter_) meter_->add(req.purpose, resp.usage);
        return resp;
    }
    std::string name() const override { return inner_->name(); }

private:
    std::shared_ptr<ChatProvider> inner_;
    std::shared_ptr<CostMeter> meter_;
};

struct Providers {
    std::shared_ptr<ChatProvider> generator;
    std::shared_ptr<ChatProvider> judge;
    std::shared_ptr<EmbeddingProvider> embedder;
    std::shared_ptr<ScholarProvider> scholar;
    std::shared_ptr<CostMeter> meter;
};

// Stack per mode:
//   mock:   Retry(Meter(Logging(Scripted)))
//   live:   Retry(Meter(Logging(Http)))
//   cached: Cache(Retry(Meter(Logging(Http))))
inline Providers make_providers(const RunConfig& config, CallLog* log) {
    Providers p;
    p.meter = std::make_shared<CostMeter>();
    RetryPolicy policy{config.retry_attempts, config.retry_base_delay_ms, 2.0};

    auto chat_stack = [&](const std::string& model) -> std::shared_ptr<ChatProvider> {
        std::shared_ptr<ChatProvider> base;
        if (config.provider_mode == ProviderMode::mock)
            base = std::make_shared<ScriptedChatProvider>(model);
        else
            base = std::make_shared<HttpChatProvider>(model);
        auto logged = std::make_shared<LoggingChatProvider>(base, log);
        auto metered = std::make_shared<MeteringChatProvider>(logged, p.meter);
        auto retried = std::make_shared<RetryingChatProvider>(metered, policy);
        if (config.provider_mode == ProviderMode::cached)
            return std::make_shared<CachedChatProvider>(retried, config.paths.cache_dir, log);
        return retried;
    };
    p.generator = chat_stack(config.generator_model);
    p.judge = chat_stack(config.judge_model);

    if (config.embedder_kind == "hash") {
        p.embedder = std::make_shared<HashEmbedder>(config.embed_dim);
    } else if (config.embedder_kind == "clustered") {
        p.embedder = std::make_shared<ClusteredEmbedder>(config.embed_dim);
    } else {
        if (config.provider_mode == ProviderMode::mock)
            throw ConfigError("mock mode needs embedder_kind \"hash\" or \"clustered\"");
        p.embedder = std::make_shared<RetryingEmbeddingProvider>(
            std::make_shared<HttpEmbeddingProvider>(config.embedder_kind, config.embed_dim),
            policy);
    }

    if (config.provider_mode == ProviderMode::mock)
        p.scholar = std::make_shared<ScriptedScholarProvider>();
    else
        p.scholar = std::make_shared<HttpScholarProvider>();
    return p;
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

inline std::vector<Problem> load_problems(const std::filesystem::path& path) {
    std::vector<Problem> out;
    std::set<std::string> ids;
    for (const auto& rec : read_jsonl(path)) {
        Problem p = rec.get<Problem>();
        if (!ids.insert(p.problem_id).second)
            throw ValidationError("duplicate problem_id: " + p.problem_id);
        out.push_back(std::move(p));
    }
    if (out.empty()) throw ValidationError("no problems in " + path.string());
    return out;
}

inline SeedLibrary load_run_library(const RunConfig& config) {
    if (config.paths.library_seeds.empty() || config.paths.library_vectors.empty())
        throw ConfigError("library paths not set (--library-seeds / --library-vectors)");
    return load_library(config.paths.library_seeds, config.paths.library_vectors);
}

inline std::vector<PaperBundle> load_paper_bundles(const std::filesystem::path& papers_dir) {
    if (!std::filesystem::is_directory(papers_dir))
        throw ConfigError("papers directory not found: " + papers_dir.string());
    std::vector<PaperBundle> bundles;
    for (const auto& de : std::filesystem::directory_iterator(papers_dir)) {
        if (!de.is_directory()) continue;
        if (!std::filesystem::is_regular_file(de.path() / "paper.md")) continue;
        bundles.push_back({de.path().filename().string(), de.path()});
    }
    std::sort(bundles.begin(), bundles.end(),
              [](const PaperBundle& a, const PaperBundle& b) { return a.paper_id < b.paper_id; });
    if (bundles.empty())
        throw ConfigError("no paper bundles (subdirectories with paper.md) in " +
                          papers_dir.string());
    return bundles;
}

// ---------------------------------------------------------------------------
// Cell execution
// ---------------------------------------------------------------------------

// One pipeline cell's buffered output: stream records flushed to the manifest
// in canonical cell order regardless of completion order.
struct CellRecords {
    std::vector<std::pair<std::string, json>> records;
    bool incomplete = false;

    void add(const std::string& stream, json record) {
        records.emplace_back(stream, std::move(record));
    }
};

namespace orchestrator_detail {

inline void flush_cell(RunManifest& manifest, const CellRecords& cell) {
    for (const auto& [stream, record] : cell.records) manifest.append(stream, record);
}

// Runs fn(i) for i in [0, n) with at most `threads` workers and flushes each
// cell's records in ascending index order.
template <typename Fn>
bool run_cells(RunManifest& manifest, size_t n, int threads, Fn fn) {
    bool any_incomplete = false;
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) {
            CellRecords cell = fn(i);
            flush_cell(manifest, cell);
            any_incomplete |= cell.incomplete;
        }
        return any_incomplete;
    }

    std::vector<std::optional<CellRecords>> done(n);
    std::mutex mutex;
    std::condition_variable ready;
    std::atomic<size_t> next_index{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next_index.fetch_add(1);
            if (i >= n) return;
            CellRecords cell = fn(i);
            std::lock_guard<std::mutex> lock(mutex);
            done[i] = std::move(cell);
            ready.notify_all();
        }
    };
    std::vector<std::thread> pool;
    size_t nthreads = std::min<size_t>(static_cast<size_t>(threads), n);
    for (size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);

    {
        std::unique_lock<std::mutex> lock(mutex);
        for (size_t next = 0; next < n; ++next) {
            ready.wait(lock, [&] { return done[next].has_value(); });
            CellRecords cell = std::move(*done[next]);
            done[next].reset();
            lock.unlock();
            flush_cell(manifest, cell);
            any_incomplete |= cell.incomplete;
            lock.lock();
        }
    }
    for (auto& t : pool) t.join();
    return any_incomplete;
}

inline std::string digest(const std::string& text) { return to_hex64(fnv1a64(text)); }

}  // namespace orchestrator_detail

struct CommandResult {
    std::filesystem::path manifest_dir;
    bool partial = false;
};

// ---------------------------------------------------------------------------
// Rating helpers
// ---------------------------------------------------------------------------

namespace orchestrator_detail {

struct MethodScores {
    NoveltyJudgment novelty;
    RubricScore validity;
    RubricScore coherence;
    RubricScore method_specificity;
};

inline MethodScores score_method(const Problem& problem, const SynthesizedMethod& method,
                                 const SeedPool& static_pool, Providers& providers,
                                 const TemplateStore& templates, int max_searches) {
    MethodScores out;
    out.novelty = judge_novelty_react(problem, method.method_text, static_pool,
                                      *providers.judge, *providers.scholar, templates,
                                      max_searches);
    SubjectBundle bundle;
    bundle.problem = problem;
    bundle.method_text = method.method_text;
    out.validity = rate(RubricAxis::validity, bundle, *providers.judge, templates);
    out.coherence = rate(RubricAxis::coherence, bundle, *providers.judge, templates);
    out.method_specificity =
        rate(RubricAxis::method_specificity, bundle, *providers.judge, templates);
    return out;
}

struct IncorporationOutcome {
    json per_seed = json::array();  // {seed_id, score}
    std::vector<std::string> dangling;
    bool unused_attribution = false;  // any no-incorporation or dangling citation
    std::vector<double> scores;
};

inline IncorporationOutcome judge_incorporation(const Problem& problem,
                                                const SynthesizedMethod& method,
                                                const ConditionedPool& pool,
                                                Providers& providers,
                                                const TemplateStore& templates) {
    IncorporationOutcome out;
    for (const auto& attr : method.inspired_by) {
        const PoolEntry* entry = nullptr;
        for (const auto& e : pool.pool.entries)
            if (e.seed.seed_id == attr.seed_id) {
                entry = &e;
                break;
            }
        if (!entry) {
            out.dangling.push_back(attr.seed_id);
            out.unused_attribution = true;
            continue;
        }
        SubjectBundle bundle;
        bundle.problem = problem;
        bundle.seed = entry->seed;
        bundle.method_text = method.method_text;
        bundle.borrowed_aspect = attr.borrowed_aspect;
        RubricScore score = rate(RubricAxis::incorporation, bundle, *providers.judge, templates);
        out.per_seed.push_back({{"seed_id", attr.seed_id}, {"score", score.value}});
        out.scores.push_back(score.value);
        if (score.value == 1) out.unused_attribution = true;
    }
    return out;
}

}  // namespace orchestrator_detail

// ---------------------------------------------------------------------------
// Pairwise enumeration (canonical order: problem x axis x pair)
// ---------------------------------------------------------------------------

struct PairTask {
    size_t problem_index = 0;
    RubricAxis axis = RubricAxis::novelty;
    Condition other = Condition::A;
    size_t call_index = 0;
};

inline std::vector<PairTask> enumerate_stage3_pairs(size_t n_problems, bool full_grid) {
    std::vector<PairTask> tasks;
    const RubricAxis axes[] = {RubricAxis::novelty, RubricAxis::validity, RubricAxis::coherence};
    const Condition others[] = {Condition::A, Condition::B, Condition::D};
    size_t call = 0;
    for (size_t p = 0; p < n_problems; ++p)
        for (RubricAxis axis : axes)
            for (Condition other : others) {
                if (!full_grid && axis == RubricAxis::coherence && other != Condition::D) continue;
                tasks.push_back({p, axis, other, call++});
            }
    return tasks;
}

inline std::vector<PairTask> enumerate_loop_pairs(size_t n_problems) {
    std::vector<PairTask> tasks;
    const RubricAxis axes[] = {RubricAxis::novelty, RubricAxis::validity, RubricAxis::coherence};
    size_t call = 0;
    for (size_t p = 0; p < n_problems; ++p)
        for (RubricAxis axis : axes) tasks.push_back({p, axis, Condition::D, call++});
    return tasks;
}

// ---------------------------------------------------------------------------
// Report generation (manifest-only; no provider access)
// ---------------------------------------------------------------------------

inline void generate_stage1_report(RunManifest& manifest) {
    auto cells = manifest.read_stream("stage1_cells");
    if (cells.empty()) return;

    TextTable table({"mode", "papers", "specificity", "grounding"});
    for (const std::string mode : {"tooled", "direct"}) {
        std::vector<double> spec_means, ground_means;
        for (const auto& cell : cells) {
            std::vector<double> spec, ground;
            for (const auto& s : cell.at("scores").at(mode)) {
                spec.push_back(s.at("specificity").get<double>());
                ground.push_back(s.at("grounding").get<double>());
            }
            if (!spec.empty()) {
                spec_means.push_back(stats::mean_std(spec).mean);
                ground_means.push_back(stats::mean_std(ground).mean);
            }
        }
        auto spec_ms = stats::mean_std(spec_means);
        auto ground_ms = stats::mean_std(ground_means);
        table.add_row({mode, std::to_string(spec_means.size()), spec_ms.display(),
                       ground_ms.display()});
    }
    table.add_footer("paper-level means; spread is the sample (n-1) standard deviation");

    auto control = manifest.read_stream("stage1_control");
    if (!control.empty()) {
        std::vector<double> scores;
        int collapsed = 0;
        for (const auto& rec : control) {
            double v = rec.at("grounding").get<double>();
            scores.push_back(v);
            if (v == 1.0) ++collapsed;
        }
        table.add_footer("shuffled-paper grounding control: mean " +
                         format_round_half_even(stats::mean_std(scores).mean, 2) + ", score-1 rate " +
                         stats::percent_display(collapsed, static_cast<int>(scores.size())) +
                         " (n=" + std::to_string(scores.size()) + ")");
    }
    manifest.write_report("stage1_summary.txt", table.render());
    manifest.write_report("stage1_summary.csv", table.csv());
}

inline void generate_stage2_report(RunManifest& manifest) {
    auto cells = manifest.read_stream("stage2_cells");
    if (cells.empty()) return;

    TextTable per_problem({"problem", "paraphrase coverage", "single-probe coverage",
                           "paraphrase pool", "single pool"});
    std::vector<double> cov_cross, cov_single;
    std::vector<double> rel_naive_cross, rel_lens_cross, rel_naive_single, rel_lens_single;
    for (const auto& cell : cells) {
        cov_cross.push_back(cell.at("paraphrase").at("coverage").get<double>());
        cov_single.push_back(cell.at("single").at("coverage").get<double>());
        per_problem.add_row(
            {cell.at("problem_id").get<std::string>(),
             std::to_string(cell.at("paraphrase").at("coverage").get<int>()),
             std::to_string(cell.at("single").at("coverage").get<int>()),
             std::to_string(cell.at("paraphrase").at("pool").at("entries").size()),
             std::to_string(cell.at("single").at("pool").at("entries").size())});
        for (const auto& r : cell.at("relevance").at("paraphrase")) {
            rel_naive_cross.push_back(r.at("naive").get<double>());
            rel_lens_cross.push_back(r.at("lens").get<double>());
        }
        for (const auto& r : cell.at("relevance").at("single")) {
            rel_naive_single.push_back(r.at("naive").get<double>());
            rel_lens_single.push_back(r.at("lens").get<double>());
        }
    }

    manifest.write_report("stage2_per_problem.txt", per_problem.render());
    manifest.write_report("stage2_per_problem.csv", per_problem.csv());

    TextTable modes({"mode", "coverage", "relevance (naive)", "relevance (lens-aware)"});
    modes.add_row({"paraphrase", stats::mean_std(cov_cross).display(),
                   format_round_half_even(stats::mean_std(rel_naive_cross).mean, 2),
                   format_round_half_even(stats::mean_std(rel_lens_cross).mean, 2)});
    modes.add_row({"single-probe", stats::mean_std(cov_single).display(),
                   format_round_half_even(stats::mean_std(rel_naive_single).mean, 2),
                   format_round_half_even(stats::mean_std(rel_lens_single).mean, 2)});
    modes.add_footer("both modes share the same maximum pool budget");
    manifest.write_report("stage2_summary.txt", modes.render());
    manifest.write_report("stage2_summary.csv", modes.csv());
}

inline void generate_stage3_report(RunManifest& manifest) {
    auto methods = manifest.read_stream("stage3_methods");
    if (methods.empty()) return;

    // Per-condition single-pass averages.
    TextTable per_cond({"condition", "novelty", "validity", "coherence", "method specificity"});
    for (const std::string cond : {"A", "B", "C", "D"}) {
        std::vector<double> nov, val, coh, spec;
        for (const auto& m : methods) {
            if (m.at("condition") != cond) continue;
            nov.push_back(m.at("scores").at("novelty").get<double>());
            val.push_back(m.at("scores").at("validity").get<double>());
            coh.push_back(m.at("scores").at("coherence").get<double>());
            spec.push_back(m.at("scores").at("method_specificity").get<double>());
        }
        if (nov.empty()) {
            per_cond.add_row({cond, "-", "-", "-", "-"});
            continue;
        }
        per_cond.add_row({cond, stats::mean_std(nov).display(), stats::mean_std(val).display(),
                          stats::mean_std(coh).display(), stats::mean_std(spec).display()});
    }
    per_cond.add_footer("single-pass per-condition averages; sample (n-1) std");
    manifest.write_report("stage3_per_condition.txt", per_cond.render());
    manifest.write_report("stage3_per_condition.csv", per_cond.csv());

    // C-centered pairwise with exact binomial p on decisive outcomes.
    auto verdicts = manifest.read_stream("stage3_pairwise");
    json stats_out;
    if (!verdicts.empty()) {
        TextTable pair_table({"pair", "axis", "C wins", "other wins", "ties", "p (binomial)"});
        for (const std::string other : {"A", "B", "D"}) {
            for (const std::string axis : {"novelty", "validity", "coherence"}) {
                int wins = 0, losses = 0, ties = 0;
                for (const auto& v : verdicts) {
                    if (v.at("other_condition") != other || v.at("verdict").at("axis") != axis)
                        continue;
                    const std::string w = v.at("verdict").at("winner").get<std::string>();
                    if (w == "left") ++wins;
                    else if (w == "right") ++losses;
                    else ++ties;
                }
                if (wins + losses + ties == 0) continue;
                stats::PairwiseTally tally{wins, losses, ties};
                std::string p = tally.decisive() > 0
                                    ? stats::binomial_two_sided_exact(tally).display(2)
                                    : "-";
                pair_table.add_row({"C vs " + other, axis, std::to_string(wins),
                                    std::to_string(losses), std::to_string(ties), p});
                stats_out["pairwise"]["C_vs_" + other][axis] = {
                    {"wins", wins},
                    {"losses", losses},
                    {"ties", ties},
                    {"p_two_sided",
                     tally.decisive() > 0 ? json(stats::binomial_two_sided(tally)) : json()},
                    {"p_display", p}};
            }
        }
        pair_table.add_footer("two-sided exact binomial on decisive outcomes (ties excluded)");
        manifest.write_report("stage3_pairwise.txt", pair_table.render());
        manifest.write_report("stage3_pairwise.csv", pair_table.csv());
    }

    // Attribution integration: incorporation means plus McNemar on the
    // unused-attribution property between C and D.
    std::map<std::string, std::map<std::string, bool>> unused;  // pid -> cond -> unused?
    std::map<std::string, std::vector<double>> incorporation;   // cond -> scores
    std::map<std::string, std::vector<double>> attr_coverage;
    for (const auto& m : methods) {
        const std::string cond = m.at("condition").get<std::string>();
        const std::string pid = m.at("problem_id").get<std::string>();
        unused[pid][cond] = m.at("unused_attribution").get<bool>();
        attr_coverage[cond].push_back(m.at("attributed_domain_coverage").get<double>());
        for (const auto& item : m.at("incorporation"))
            incorporation[cond].push_back(item.at("score").get<double>());
    }
    TextTable attr_table({"condition", "incorporation (1-3)", "attributed domain coverage",
                          "problems with unused attribution"});
    for (const std::string cond : {"C", "D"}) {
        int unused_count = 0, total = 0;
        for (const auto& [pid, conds] : unused) {
            auto it = conds.find(cond);
            if (it == conds.end()) continue;
            ++total;
            if (it->second) ++unused_count;
        }
        attr_table.add_row({cond,
                            incorporation[cond].empty()
                                ? "-"
                                : format_round_half_even(
                                      stats::mean_std(incorporation[cond]).mean, 2),
                            attr_coverage[cond].empty()
                                ? "-"
                                : stats::mean_std(attr_coverage[cond]).display(),
                            std::to_string(unused_count) + "/" + std::to_string(total)});
    }
    int b = 0, c = 0;
    for (const auto& [pid, conds] : unused) {
        auto ci = conds.find("C");
        auto di = conds.find("D");
        if (ci == conds.end() || di == conds.end()) continue;
        bool clean_c = !ci->second, clean_d = !di->second;
        if (clean_c && !clean_d) ++b;
        if (!clean_c && clean_d) ++c;
    }
    stats_out["mcnemar"] = {{"b", b}, {"c", c}};
    if (b + c > 0) {
        stats::DiscordantPair d{b, c};
        attr_table.add_footer("discordant pairs: b=" + std::to_string(b) + " (clean only under C), c=" +
                              std::to_string(c) + " (clean only under D)");
        attr_table.add_footer("McNemar chi2 = " +
                              format_round_half_even(stats::mcnemar_chi2(d), 2) +
                              ", exact two-sided p = " + stats::mcnemar_exact_p(d).display(3));
        stats_out["mcnemar"]["chi2"] = stats::mcnemar_chi2(d);
        stats_out["mcnemar"]["p_exact"] = stats::mcnemar_exact(d);
        stats_out["mcnemar"]["p_display"] = stats::mcnemar_exact_p(d).display(3);
    } else {
        attr_table.add_footer("no discordant pairs between C and D; McNemar undefined");
    }
    manifest.write_report("stage3_attribution.txt", attr_table.render());
    manifest.write_report("stage3_attribution.csv", attr_table.csv());
    manifest.write_report("stage3_stats.json", stats_out.dump(2) + "\n");
}

inline void generate_loop_report(RunManifest& manifest) {
    auto traces = manifest.read_stream("loop_traces");
    if (traces.empty()) return;

    TextTable rounds_table({"condition", "problems", "mean rounds", "first-round pass rate"});
    for (const std::string cond : {"C", "D"}) {
        std::vector<double> rounds;
        int first_pass = 0;
        for (const auto& t : traces) {
            if (t.at("condition") != cond) continue;
            size_t n = t.at("trace").at("rounds").size();
            rounds.push_back(static_cast<double>(n));
            if (n == 1 && t.at("trace").at("terminated_by") == "threshold_met") ++first_pass;
        }
        if (rounds.empty()) continue;
        rounds_table.add_row({cond, std::to_string(rounds.size()),
                              stats::mean_std(rounds).display(),
                              stats::percent_display(first_pass, static_cast<int>(rounds.size()))});
    }
    manifest.write_report("loop_rounds.txt", rounds_table.render());
    manifest.write_report("loop_rounds.csv", rounds_table.csv());

    auto verdicts = manifest.read_stream("loop_pairwise");
    if (!verdicts.empty()) {
        TextTable table({"axis", "C wins", "D wins", "ties", "p (binomial)"});
        json stats_out;
        for (const std::string axis : {"novelty", "validity", "coherence"}) {
            int wins = 0, losses = 0, ties = 0;
            for (const auto& v : verdicts) {
                if (v.at("verdict").at("axis") != axis) continue;
                const std::string w = v.at("verdict").at("winner").get<std::string>();
                if (w == "left") ++wins;
                else if (w == "right") ++losses;
                else ++ties;
            }
            int total = wins + losses + ties;
            if (total == 0) continue;
            stats::PairwiseTally tally{wins, losses, ties};
            std::string p = tally.decisive() > 0
                                ? stats::binomial_two_sided_exact(tally).display(2)
                                : "-";
            table.add_row({axis, stats::percent_display(wins, total),
                           stats::percent_display(losses, total),
                           stats::percent_display(ties, total), p});
            stats_out[axis] = {{"wins", wins}, {"losses", losses}, {"ties", ties},
                               {"p_display", p}};
        }
        table.add_footer("loop ablation pairwise win rates, C vs D");
        manifest.write_report("loop_pairwise.txt", table.render());
        manifest.write_report("loop_pairwise.csv", table.csv());
        manifest.write_report("loop_stats.json", stats_out.dump(2) + "\n");
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace orchestrator_detail {

inline RunManifest open_or_create(const RunConfig& config, const std::string& stage) {
    make_providers(config, nullptr);  // provider misconfiguration fails before any work
    std::filesystem::path dir = config.paths.output_dir;
    if (RunManifest::exists(dir)) return RunManifest::open(dir);
    json snapshot = config_to_json(config);
    snapshot["stage"] = stage;
    TemplateStore templates(config.paths.templates_dir);
    snapshot["template_versions"] = templates.versions_json();
    return RunManifest::create(dir, snapshot);
}

// Token totals grouped by request purpose, recovered from the write-ahead
// provider log.
inline json token_totals(const RunManifest& manifest) {
    std::map<std::string, std::string> purpose_by_fp;
    std::map<std::string, std::pair<int64_t, int64_t>> totals;
    for (const auto& event : manifest.read_stream("provider_calls")) {
        const std::string type = event.value("type", "");
        if (type == "chat_request") {
            purpose_by_fp[event.at("fingerprint").get<std::string>()] =
                event.at("request").value("purpose", "unknown");
        } else if (type == "chat_response") {
            auto it = purpose_by_fp.find(event.at("fingerprint").get<std::string>());
            const std::string purpose = it == purpose_by_fp.end() ? "unknown" : it->second;
            const auto& usage = event.at("response").at("usage");
            totals[purpose].first += usage.value("input", int64_t{0});
            totals[purpose].second += usage.value("output", int64_t{0});
        }
    }
    json out = json::object();
    for (const auto& [purpose, usage] : totals)
        out[purpose] = {{"input_tokens", usage.first}, {"output_tokens", usage.second}};
    return out;
}

inline void append_summary(RunManifest& manifest, const std::string& stage, int64_t started_ms) {
    manifest.append("summary",
                    json{{"stage", stage},
                         {"elapsed_s", (now_unix_ms() - started_ms) / 1000.0},
                         {"tokens", token_totals(manifest)}});
}

}  // namespace orchestrator_detail

// ingest: raw seed records -> embedded library on disk, per-domain counts back.
inline json cmd_ingest(const RunConfig& config, const std::filesystem::path& records_path) {
    if (config.paths.library_seeds.empty() || config.paths.library_vectors.empty())
        throw ConfigError("ingest needs --library-seeds and --library-vectors output paths");
    auto records = read_jsonl(records_path);
    MemoryCallLog log;
    Providers providers = make_providers(config, &log);
    IngestOptions options{config.year_min, config.year_max};
    auto result = ingest(records, *providers.embedder, options);
    save_library(result.library, config.paths.library_seeds, config.paths.library_vectors);

    json counts = json::object();
    for (const auto& [domain, count] : result.library.domain_counts())
        counts[domain_token(domain)] = count;
    return json{{"seeds", result.library.size()},
                {"dim", result.library.dim()},
                {"per_domain", counts},
                {"warnings", result.warnings}};
}

// stage1: paired tooled/direct extraction over a paper set, scored on
// specificity and grounding; optional shuffled-paper grounding control.
inline CommandResult cmd_stage1(const RunConfig& config) {
    auto bundles = load_paper_bundles(config.paths.papers_dir);
    TemplateStore templates(config.paths.templates_dir);
    RunManifest manifest = orchestrator_detail::open_or_create(config, "stage1");
    auto done = manifest.completed_cells();
    const int64_t started = now_unix_ms();

    SandboxLimits limits{config.tool_output_cap, config.bash_timeout_ms, 200};
    SandboxFactory factory(std::filesystem::path(config.paths.output_dir) / "sandboxes",
                           IsolationBackend::restricted_subprocess,
                           config.provider_mode == ProviderMode::live, limits);
    ExtractionOptions ext_options;
    ext_options.step_budget = config.step_budget;

    bool partial = orchestrator_detail::run_cells(
        manifest, bundles.size(), config.concurrency, [&](size_t i) -> CellRecords {
            CellRecords cell;
            const PaperBundle& bundle = bundles[i];
            const std::string key = "stage1/" + bundle.paper_id;
            if (done.count(key)) return cell;
            try {
                MemoryCallLog log;
                Providers providers = make_providers(config, &log);
                auto tooled = extract_tooled(bundle, *providers.generator, factory, templates,
                                             ext_options);
                auto direct = extract_direct(bundle, *providers.generator, templates, ext_options);
                const std::string paper_text = read_text_file(bundle.dir / "paper.md");

                json scores = {{"tooled", json::array()}, {"direct", json::array()}};
                for (const auto& [mode, trace] :
                     {std::pair<const char*, const ExtractionTrace*>{"tooled", &tooled},
                      {"direct", &direct}}) {
                    for (const auto& seed : trace->verified_seeds) {
                        SubjectBundle b;
                        b.seed = seed;
                        b.paper_text = paper_text;
                        auto spec = rate(RubricAxis::specificity, b, *providers.judge, templates);
                        auto ground = rate(RubricAxis::grounding, b, *providers.judge, templates);
                        scores[mode].push_back({{"seed_id", seed.seed_id},
                                                {"specificity", spec.value},
                                                {"grounding", ground.value}});
                    }
                }
                for (const auto& event : log.events()) cell.add("provider_calls", event);
                cell.add("stage1_cells", json{{"paper_id", bundle.paper_id},
                                              {"tooled", tooled},
                                              {"direct", direct},
                                              {"scores", scores}});
                cell.incomplete = tooled.incomplete || direct.incomplete;
                cell.add("cells", json{{"cell", key}});
            } catch (const std::exception& e) {
                cell.incomplete = true;
                cell.add("errors", json{{"cell", key}, {"error", e.what()}});
            }
            return cell;
        });

    // Negative control: re-judge grounding against a seeded-shuffled paper
    // pairing (a mode switch on the same judge, not a separate judge).
    if (config.negative_control && !manifest.has_stream("stage1_control")) {
        struct ControlSeed {
            Seed seed;
            std::string own_paper;
        };
        std::vector<ControlSeed> all;
        std::map<std::string, std::string> paper_texts;
        for (const auto& bundle : bundles)
            paper_texts[bundle.paper_id] = read_text_file(bundle.dir / "paper.md");
        for (const auto& rec : manifest.read_stream("stage1_cells")) {
            for (const std::string mode : {"tooled", "direct"}) {
                for (const auto& seed_json : rec.at(mode).at("verified_seeds")) {
                    ControlSeed cs;
                    cs.seed = seed_json.get<Seed>();
                    cs.own_paper = rec.at("paper_id").get<std::string>();
                    all.push_back(std::move(cs));
                }
            }
        }
        if (all.size() >= 2) {
            auto perm = sample_without_replacement(all.size(), all.size(),
                                                   config.condition_rng_seed);
            MemoryCallLog log;
            Providers providers = make_providers(config, &log);
            for (size_t i = 0; i < perm.size(); ++i) {
                const ControlSeed& subject = all[perm[i]];
                const ControlSeed& partner = all[perm[(i + 1) % perm.size()]];
                SubjectBundle b;
                b.seed = subject.seed;
                b.paper_text = paper_texts.at(partner.own_paper);
                b.grounding_shuffled = true;
                auto score = rate(RubricAxis::grounding, b, *providers.judge, templates);
                manifest.append("stage1_control",
                                json{{"seed_id", subject.seed.seed_id},
                                     {"own_paper", subject.own_paper},
                                     {"paired_paper", partner.own_paper},
                                     {"pair_matched", partner.own_paper == subject.own_paper},
                                     {"grounding", score.value}});
            }
            for (const auto& event : log.events()) manifest.append("provider_calls", event);
        }
    }

    generate_stage1_report(manifest);
    orchestrator_detail::append_summary(manifest, "stage1", started);
    return {manifest.dir(), partial};
}

// stage2: paraphrase mode vs single-probe baseline per problem, with coverage
// and per-seed relevance measurement.
inline CommandResult cmd_stage2(const RunConfig& config) {
    auto problems = load_problems(config.paths.problems);
    SeedLibrary library = load_run_library(config);
    TemplateStore templates(config.paths.templates_dir);
    RunManifest manifest = orchestrator_detail::open_or_create(config, "stage2");
    auto done = manifest.completed_cells();
    const int64_t started = now_unix_ms();

    bool partial = orchestrator_detail::run_cells(
        manifest, problems.size(), config.concurrency, [&](size_t i) -> CellRecords {
            CellRecords cell;
            const Problem& problem = problems[i];
            const std::string key = "stage2/" + problem.problem_id;
            if (done.count(key)) return cell;
            try {
                MemoryCallLog log;
                Providers providers = make_providers(config, &log);
                auto paraphrases = paraphrase_all(problem, *providers.generator, templates);
                auto cross = retrieve_pool(problem, paraphrases, library, config.k,
                                           *providers.embedder);
                auto single = single_probe_pool(problem, library, config.budget,
                                                *providers.embedder);

                auto judge_pool = [&](const SeedPool& pool) {
                    json out = json::array();
                    for (const auto& entry : pool.entries) {
                        SubjectBundle naive;
                        naive.problem = problem;
                        naive.seed = entry.seed;
                        SubjectBundle lensed = naive;
                        lensed.lens_text = entry.lens_text;
                        out.push_back(
                            {{"seed_id", entry.seed.seed_id},
                             {"naive",
                              rate(RubricAxis::relevance_naive, naive, *providers.judge,
                                   templates).value},
                             {"lens",
                              rate(RubricAxis::relevance_lens, lensed, *providers.judge,
                                   templates).value}});
                    }
                    return out;
                };

                json record = {
                    {"problem_id", problem.problem_id},
                    {"paraphrases", paraphrases},
                    {"paraphrase",
                     {{"pool", cross.pool}, {"probes", cross.probes},
                      {"coverage", coverage(cross.pool)}}},
                    {"single",
                     {{"pool", single.pool}, {"probes", single.probes},
                      {"coverage", coverage(single.pool)}}},
                    {"relevance",
                     {{"paraphrase", judge_pool(cross.pool)}, {"single", judge_pool(single.pool)}}},
                    {"warnings", cross.warnings}};
                for (const auto& event : log.events()) cell.add("provider_calls", event);
                cell.add("stage2_cells", std::move(record));
                cell.add("cells", json{{"cell", key}});
            } catch (const std::exception& e) {
                cell.incomplete = true;
                cell.add("errors", json{{"cell", key}, {"error", e.what()}});
            }
            return cell;
        });

    generate_stage2_report(manifest);
    orchestrator_detail::append_summary(manifest, "stage2", started);
    return {manifest.dir(), partial};
}

// stage3: A/B/C/D synthesis per problem with the full judging battery,
// C-centered pairwise grid, and the exact statistics.
inline CommandResult cmd_stage3(const RunConfig& config) {
    auto problems = load_problems(config.paths.problems);
    SeedLibrary library = load_run_library(config);
    TemplateStore templates(config.paths.templates_dir);
    RunManifest manifest = orchestrator_detail::open_or_create(config, "stage3");
    auto done = manifest.completed_cells();
    const int64_t started = now_unix_ms();

    const Condition conditions[] = {Condition::A, Condition::B, Condition::C, Condition::D};
    const size_t n_cells = problems.size() * 4;

    bool partial = orchestrator_detail::run_cells(
        manifest, n_cells, config.concurrency, [&](size_t idx) -> CellRecords {
            CellRecords cell;
            const Problem& problem = problems[idx / 4];
            const Condition cond = conditions[idx % 4];
            const std::string key =
                "stage3/" + problem.problem_id + "/" + condition_name(cond);
            if (done.count(key)) return cell;
            try {
                MemoryCallLog log;
                Providers providers = make_providers(config, &log);
                auto build = build_condition(cond, problem, library, config.k, config.budget,
                                             config.condition_rng_seed, *providers.embedder,
                                             *providers.generator, templates);
                auto method = synthesize(problem, build.conditioned, *providers.generator,
                                         templates);
                auto scores = orchestrator_detail::score_method(
                    problem, method, build.conditioned.pool, providers, templates,
                    config.max_searches);
                auto incorporation = orchestrator_detail::judge_incorporation(
                    problem, method, build.conditioned, providers, templates);
                auto audit = audit_attributions(method.inspired_by, build.conditioned);

                json record = {
                    {"problem_id", problem.problem_id},
                    {"condition", condition_name(cond)},
                    {"pool", build.conditioned},
                    {"paraphrases", build.paraphrases},
                    {"method", method},
                    {"scores",
                     {{"novelty", scores.novelty.score.value},
                      {"validity", scores.validity.value},
                      {"coherence", scores.coherence.value},
                      {"method_specificity", scores.method_specificity.value}}},
                    {"novelty_judgment", scores.novelty},
                    {"incorporation", incorporation.per_seed},
                    {"dangling_attributions", incorporation.dangling},
                    {"unused_attribution", incorporation.unused_attribution},
                    {"attributed_domain_coverage", audit.distinct_domains}};
                for (const auto& event : log.events()) cell.add("provider_calls", event);
                cell.add("stage3_methods", std::move(record));
                cell.add("cells", json{{"cell", key}});
            } catch (const std::exception& e) {
                cell.incomplete = true;
                cell.add("errors", json{{"cell", key}, {"error", e.what()}});
            }
            return cell;
        });

    // Pairwise phase over the stored methods. The permutation table is
    // materialized across the full canonical enumeration, so a resumed run
    // keeps every call's position assignment.
    std::map<std::string, std::map<std::string, std::string>> method_texts;  // pid -> cond -> text
    for (const auto& rec : manifest.read_stream("stage3_methods"))
        method_texts[rec.at("problem_id").get<std::string>()]
                    [rec.at("condition").get<std::string>()] =
            rec.at("method").at("method_text").get<std::string>();

    auto tasks = enumerate_stage3_pairs(problems.size(), config.full_pairwise_grid);
    auto table = PermutationTable::materialize(tasks.size(), config.pairwise_rng_seed);
    if (!manifest.has_stream("stage3_permutations"))
        manifest.append("stage3_permutations", table.to_json());

    bool pair_partial = orchestrator_detail::run_cells(
        manifest, tasks.size(), config.concurrency, [&](size_t t) -> CellRecords {
            CellRecords cell;
            const PairTask& task = tasks[t];
            const Problem& problem = problems[task.problem_index];
            const std::string other = condition_name(task.other);
            const std::string key = "stage3pair/" + problem.problem_id + "/" +
                                    axis_name(task.axis) + "/C_vs_" + other;
            if (done.count(key)) return cell;
            try {
                const auto& per_problem = method_texts.at(problem.problem_id);
                const std::string& c_text = per_problem.at("C");
                const std::string& other_text = per_problem.at(other);
                MemoryCallLog log;
                Providers providers = make_providers(config, &log);
                auto verdict = judge_pairwise(
                    task.axis, problem, "C:" + problem.problem_id, c_text,
                    other + ":" + problem.problem_id, other_text,
                    table.swapped(task.call_index), *providers.judge, templates);
                for (const auto& event : log.events()) cell.add("provider_calls", event);
                cell.add("stage3_pairwise", json{{"problem_id", problem.problem_id},
                                                 {"other_condition", other},
                                                 {"call_index", task.call_index},
                                                 {"verdict", verdict}});
                cell.add("cells", json{{"cell", key}});
            } catch (const std::exception& e) {
                cell.incomplete = true;
                cell.add("errors", json{{"cell", key}, {"error", e.what()}});
            }
            return cell;
        });

    generate_stage3_report(manifest);
    orchestrator_detail::append_summary(manifest, "stage3", started);
    return {manifest.dir(), partial || pair_partial};
}

// loop: novelty-guided iteration for conditions C and D per problem, then
// C-vs-D pairwise on the final methods.
inline CommandResult cmd_loop(const RunConfig& config) {
    auto problems = load_problems(config.paths.problems);
    SeedLibrary library = load_run_library(config);
    TemplateStore templates(config.paths.templates_dir);
    RunManifest manifest = orchestrator_detail::open_or_create(config, "loop");
    auto done = manifest.completed_cells();
    const int64_t started = now_unix_ms();

    const Condition conditions[] = {Condition::C, Condition::D};
    const size_t n_cells = problems.size() * 2;

    bool partial = orchestrator_detail::run_cells(
        manifest, n_cells, config.concurrency, [&](size_t idx) -> CellRecords {
            CellRecords cell;
            const Problem& problem = problems[idx / 2];
            const Condition cond = conditions[idx % 2];
            const std::string key = "loop/" + problem.problem_id + "/" + condition_name(cond);
            if (done.count(key)) return cell;
            try {
                MemoryCallLog log;
                Providers providers = make_providers(config, &log);
                auto build = build_condition(cond, problem, library, config.k, config.budget,
                                             config.condition_rng_seed, *providers.embedder,
                                             *providers.generator, templates);
                auto judge_fn = [&](const SynthesizedMethod& m) {
                    return judge_novelty_react(problem, m.method_text, build.conditioned.pool,
                                               *providers.judge, *providers.scholar, templates,
                                               config.max_searches);
                };
                json record = {{"problem_id", problem.problem_id},
                               {"condition", condition_name(cond)}};
                try {
                    auto trace = run_novelty_loop(problem, build.conditioned,
                                                  *providers.generator, judge_fn,
                                                  config.loop_threshold, config.loop_max_rounds,
                                                  templates);
                    record["trace"] = trace;
                } catch (const LoopError& e) {
                    record["trace"] = e.partial;
                    record["incomplete"] = true;
                    record["error"] = e.what();
                    cell.incomplete = true;
                }
                for (const auto& event : log.events()) cell.add("provider_calls", event);
                cell.add("loop_traces", std::move(record));
                cell.add("cells", json{{"cell", key}});
            } catch (const std::exception& e) {
                cell.incomplete = true;
                cell.add("errors", json{{"cell", key}, {"error", e.what()}});
            }
            return cell;
        });

    // Pairwise C vs D over the final (last-round) methods.
    std::map<std::string, std::map<std::string, std::string>> finals;
    for (const auto& rec : manifest.read_stream("loop_traces")) {
        const auto& rounds = rec.at("trace").at("rounds");
        if (rounds.empty()) continue;
        finals[rec.at("problem_id").get<std::string>()]
              [rec.at("condition").get<std::string>()] =
            rounds.back().at("method").at("method_text").get<std::string>();
    }
    auto tasks = enumerate_loop_pairs(problems.size());
    auto table = PermutationTable::materialize(tasks.size(), config.pairwise_rng_seed);
    if (!manifest.has_stream("loop_permutations"))
        manifest.append("loop_permutations", table.to_json());

    bool pair_partial = orchestrator_detail::run_cells(
        manifest, tasks.size(), config.concurrency, [&](size_t t) -> CellRecords {
            CellRecords cell;
            const PairTask& task = tasks[t];
            const Problem& problem = problems[task.problem_index];
            const std::string key =
                "looppair/" + problem.problem_id + "/" + axis_name(task.axis);
            if (done.count(key)) return cell;
            try {
                const auto& per_problem = finals.at(problem.problem_id);
                MemoryCallLog log;
                Providers providers = make_providers(config, &log);
                auto verdict = judge_pairwise(
                    task.axis, problem, "C:" + problem.problem_id, per_problem.at("C"),
                    "D:" + problem.problem_id, per_problem.at("D"),
                    table.swapped(task.call_index), *providers.judge, templates);
                for (const auto& event : log.events()) cell.add("provider_calls", event);
                cell.add("loop_pairwise", json{{"problem_id", problem.problem_id},
                                               {"call_index", task.call_index},
                                               {"verdict", verdict}});
                cell.add("cells", json{{"cell", key}});
            } catch (const std::exception& e) {
                cell.incomplete = true;
                cell.add("errors", json{{"cell", key}, {"error", e.what()}});
            }
            return cell;
        });

    generate_loop_report(manifest);
    orchestrator_detail::append_summary(manifest, "loop", started);
    return {manifest.dir(), partial || pair_partial};
}

// walkthrough: one problem through condition C (optionally A and D), with a
// human-readable trace report.
inline CommandResult cmd_walkthrough(const RunConfig& config, const std::string& problem_id) {
    auto problems = load_problems(config.paths.problems);
    const Problem* problem = nullptr;
    for (const auto& p : problems)
        if (p.problem_id == problem_id) problem = &p;
    if (!problem) throw ConfigError("unknown problem_id: " + problem_id);

    SeedLibrary library = load_run_library(config);
    TemplateStore templates(config.paths.templates_dir);
    RunManifest manifest = orchestrator_detail::open_or_create(config, "walkthrough");
    const int64_t started = now_unix_ms();

    MemoryCallLog log;
    Providers providers = make_providers(config, &log);
    auto build = build_condition(Condition::C, *problem, library, config.k, config.budget,
                                 config.condition_rng_seed, *providers.embedder,
                                 *providers.generator, templates);
    auto method = synthesize(*problem, build.conditioned, *providers.generator, templates);
    auto novelty = judge_novelty_react(*problem, method.method_text, build.conditioned.pool,
                                       *providers.judge, *providers.scholar, templates,
                                       config.max_searches);

    std::string report;
    report += "Walkthrough: problem " + problem->problem_id + " (condition C)\n";
    report += std::string(72, '=') + "\n\n";
    report += "Problem (" + std::string(domain_pretty(problem->natural_domain)) + "):\n  " +
              problem->text + "\n\n";

    report += "Paraphrases (one per domain; natural domain uses the raw statement):\n";
    for (const auto& p : build.paraphrases)
        report += "  [" + std::string(domain_token(p.target_domain)) + "] " + p.text + "\n";
    report += "\n";

    TextTable slate({"#", "domain", "seed", "paper", "lens"});
    for (size_t i = 0; i < build.conditioned.pool.entries.size(); ++i) {
        const auto& e = build.conditioned.pool.entries[i];
        slate.add_row({std::to_string(i + 1), domain_token(e.seed.domain), e.seed.seed_id,
                       e.seed.paper_id, e.lens_text});
    }
    report += "Retrieved slate (" + std::to_string(build.conditioned.pool.entries.size()) +
              " seeds, budget " + std::to_string(build.conditioned.pool.budget) + "):\n" +
              slate.render() + "\n";

    report += "Synthesized method:\n  " + method.method_text + "\n\n";
    report += "Rationale:\n  " + method.rationale_text + "\n\n";

    // Attribution table; multi-seed papers merge into a single row.
    std::vector<std::pair<std::string, std::vector<const Attribution*>>> by_paper;
    std::vector<std::string> dangling;
    for (const auto& attr : method.inspired_by) {
        const PoolEntry* entry = nullptr;
        for (const auto& e : build.conditioned.pool.entries)
            if (e.seed.seed_id == attr.seed_id) entry = &e;
        if (!entry) {
            dangling.push_back(attr.seed_id);
            continue;
        }
        bool found = false;
        for (auto& [paper, attrs] : by_paper)
            if (paper == entry->seed.paper_id) {
                attrs.push_back(&attr);
                found = true;
            }
        if (!found) by_paper.push_back({entry->seed.paper_id, {&attr}});
    }
    TextTable attribution({"domain", "source paper", "borrowed aspect(s)"});
    for (const auto& [paper, attrs] : by_paper) {
        std::set<std::string> domains;
        std::string aspects;
        for (const Attribution* a : attrs) {
            for (const auto& e : build.conditioned.pool.entries)
                if (e.seed.seed_id == a->seed_id) domains.insert(domain_token(e.seed.domain));
            aspects += (aspects.empty() ? "" : "; ") + a->borrowed_aspect;
        }
        std::string domain_cell;
        for (const auto& d : domains) domain_cell += (domain_cell.empty() ? "" : ", ") + d;
        attribution.add_row({domain_cell, paper, aspects});
    }
    report += "Attributed seeds (" + std::to_string(method.inspired_by.size()) +
              " attributions, " + std::to_string(by_paper.size()) + " papers):\n" +
              attribution.render();
    if (!dangling.empty()) {
        report += "Dangling attributions (not in the pool): ";
        for (const auto& d : dangling) report += d + " ";
        report += "\n";
    }
    report += "\nNovelty: " + std::to_string(novelty.score.value) + "/5 after " +
              std::to_string(novelty.steps.size()) + " literature searches\n";
    report += "  " + novelty.score.reasoning + "\n\n";

    // Optional comparison conditions.
    if (config.walkthrough_with_ad) {
        for (Condition cond : {Condition::A, Condition::D}) {
            auto other_build = build_condition(cond, *problem, library, config.k, config.budget,
                                               config.condition_rng_seed, *providers.embedder,
                                               *providers.generator, templates);
            auto other = synthesize(*problem, other_build.conditioned, *providers.generator,
                                    templates);
            auto pair_table = PermutationTable::materialize(3, config.pairwise_rng_seed);
            report += "Pairwise C vs " + std::string(condition_name(cond)) + ":\n";
            size_t call = 0;
            for (RubricAxis axis :
                 {RubricAxis::novelty, RubricAxis::validity, RubricAxis::coherence}) {
                auto verdict = judge_pairwise(axis, *problem, "C", method.method_text,
                                              condition_name(cond), other.method_text,
                                              pair_table.swapped(call++), *providers.judge,
                                              templates);
                std::string winner = verdict.winner == PairwiseWinner::tie
                                         ? "tie"
                                         : (verdict.winner == PairwiseWinner::left
                                                ? "C"
                                                : condition_name(cond));
                report += "  " + std::string(axis_name(axis)) + ": " + winner + " — " +
                          verdict.pivot_reason + "\n";
            }
            report += "\n";
        }
    }

    const double elapsed_s = (now_unix_ms() - started) / 1000.0;
    json tokens = providers.meter->to_json();
    int64_t tok_in = 0, tok_out = 0;
    for (const auto& [stage, usage] : tokens.items()) {
        tok_in += usage.at("input_tokens").get<int64_t>();
        tok_out += usage.at("output_tokens").get<int64_t>();
    }
    const double cost = (static_cast<double>(tok_in) * config.price_in_per_mtok +
                         static_cast<double>(tok_out) * config.price_out_per_mtok) /
                        1e6;
    report += "Timing: " + format_round_half_even(elapsed_s, 2) + " s wall-clock\n";
    report += "Cost: " + std::to_string(tok_in) + " input / " + std::to_string(tok_out) +
              " output tokens, estimated $" + format_round_half_even(cost, 2) +
              " (informational)\n";

    for (const auto& event : log.events()) manifest.append("provider_calls", event);
    manifest.append("walkthroughs", json{{"problem_id", problem->problem_id},
                                         {"pool", build.conditioned},
                                         {"paraphrases", build.paraphrases},
                                         {"method", method},
                                         {"novelty_judgment", novelty},
                                         {"elapsed_s", elapsed_s},
                                         {"tokens", tokens}});
    manifest.write_report("walkthrough_" + problem->problem_id + ".txt", report);
    orchestrator_detail::append_summary(manifest, "walkthrough", started);
    return {manifest.dir(), false};
}

// report: regenerate every table from an existing manifest, provider-free.
inline CommandResult cmd_report(const std::filesystem::path& manifest_dir) {
    RunManifest manifest = RunManifest::open(manifest_dir);
    generate_stage1_report(manifest);
    generate_stage2_report(manifest);
    generate_stage3_report(manifest);
    generate_loop_report(manifest);
    return {manifest.dir(), false};
}

}  // namespace papergym
