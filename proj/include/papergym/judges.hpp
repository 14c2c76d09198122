#pragma once

#include <optional>
#include <string>
#include <vector>

#include <papergym/conditions.hpp>
#include <papergym/providers.hpp>
#include <papergym/retrieval.hpp>
#include <papergym/templates.hpp>

namespace papergym {

// ---------------------------------------------------------------------------
// Axes and scores
// ---------------------------------------------------------------------------

enum class RubricAxis {
    specificity,
    grounding,
    relevance_naive,
    relevance_lens,
    novelty,
    validity,
    coherence,
    incorporation,
    method_specificity,
};

inline const char* axis_name(RubricAxis a) {
    switch (a) {
        case RubricAxis::specificity: return "specificity";
        case RubricAxis::grounding: return "grounding";
        case RubricAxis::relevance_naive: return "relevance_naive";
        case RubricAxis::relevance_lens: return "relevance_lens";
        case RubricAxis::novelty: return "novelty";
        case RubricAxis::validity: return "validity";
        case RubricAxis::coherence: return "coherence";
        case RubricAxis::incorporation: return "incorporation";
        case RubricAxis::method_specificity: return "method_specificity";
    }
    throw Error("axis_name: bad axis");
}

inline int axis_scale_max(RubricAxis a) {
    return a == RubricAxis::incorporation ? 3 : 5;
}

inline std::string axis_template(RubricAxis a) {
    if (a == RubricAxis::novelty) return "rubric_novelty_react";
    return std::string("rubric_") + axis_name(a);
}

struct RubricScore {
    RubricAxis axis = RubricAxis::specificity;
    int value = 0;
    int scale_max = 5;
    std::string reasoning;
    std::string transcript_ref;  // fingerprint of the judging request
    bool missing_reasoning = false;
};

inline void to_json(json& j, const RubricScore& s) {
    j = json{{"axis", axis_name(s.axis)},       {"value", s.value},
             {"scale_max", s.scale_max},        {"reasoning", s.reasoning},
             {"transcript_ref", s.transcript_ref}};
    if (s.missing_reasoning) j["missing_reasoning"] = true;
}

// ---------------------------------------------------------------------------
// Judge output parsing
// ---------------------------------------------------------------------------

namespace judge_detail {

// Pulls the first parseable JSON object out of a model reply: fenced blocks
// first, then the widest brace span.
inline std::optional<json> extract_json_object(const std::string& text) {
    size_t pos = 0;
    while ((pos = text.find("```", pos)) != std::string::npos) {
        size_t start = pos + 3;
        if (text.compare(start, 4, "json") == 0) start += 4;
        size_t end = text.find("```", start);
        if (end == std::string::npos) break;
        json parsed = json::parse(text.substr(start, end - start), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
        pos = end + 3;
    }
    size_t first = text.find('{');
    size_t last = text.rfind('}');
    if (first == std::string::npos || last == std::string::npos || last < first) return std::nullopt;
    json parsed = json::parse(text.substr(first, last - first + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    return std::nullopt;
}

inline std::string digest(const std::string& text) { return to_hex64(fnv1a64(text)); }

}  // namespace judge_detail

// ---------------------------------------------------------------------------
// Subject bundles
// ---------------------------------------------------------------------------

// What a judge sees. Which fields must be present depends on the axis; rate()
// enforces the pairing.
struct SubjectBundle {
    std::optional<Problem> problem;
    std::optional<Seed> seed;
    std::string paper_text;        // grounding
    std::string method_text;       // stage-3 axes
    std::string lens_text;         // relevance_lens
    std::string borrowed_aspect;   // incorporation
    bool grounding_shuffled = false;  // negative-control mode
};

namespace judge_detail {

inline std::string seed_block(const Seed& s) {
    return "problem: " + s.problem + "\nmethod: " + s.method;
}

inline void require(bool cond, RubricAxis axis, const char* what) {
    if (!cond)
        throw JudgeError(std::string("rate(") + axis_name(axis) + "): bundle missing " + what);
}

inline std::map<std::string, std::string> template_vars(RubricAxis axis,
                                                        const SubjectBundle& bundle) {
    std::map<std::string, std::string> vars;
    switch (axis) {
        case RubricAxis::specificity:
            require(bundle.seed.has_value(), axis, "seed");
            vars["method_text"] = bundle.seed->method;
            break;
        case RubricAxis::grounding:
            require(bundle.seed.has_value(), axis, "seed");
            require(!bundle.paper_text.empty(), axis, "paper text");
            vars["seed_block"] = seed_block(*bundle.seed);
            vars["paper_text"] = bundle.paper_text;
            break;
        case RubricAxis::relevance_naive:
            require(bundle.problem.has_value(), axis, "problem");
            require(bundle.seed.has_value(), axis, "seed");
            vars["problem_text"] = bundle.problem->text;
            vars["seed_problem"] = bundle.seed->problem;
            vars["seed_method"] = bundle.seed->method;
            break;
        case RubricAxis::relevance_lens:
            require(bundle.problem.has_value(), axis, "problem");
            require(bundle.seed.has_value(), axis, "seed");
            require(!bundle.lens_text.empty(), axis, "lens text");
            vars["problem_text"] = bundle.problem->text;
            vars["seed_problem"] = bundle.seed->problem;
            vars["seed_method"] = bundle.seed->method;
            vars["lens_text"] = bundle.lens_text;
            break;
        case RubricAxis::validity:
        case RubricAxis::coherence:
            require(bundle.problem.has_value(), axis, "problem");
            require(!bundle.method_text.empty(), axis, "method text");
            vars["problem_text"] = bundle.problem->text;
            vars["method_text"] = bundle.method_text;
            break;
        case RubricAxis::method_specificity:
            require(!bundle.method_text.empty(), axis, "method text");
            vars["method_text"] = bundle.method_text;
            break;
        case RubricAxis::incorporation:
            require(bundle.seed.has_value(), axis, "seed");
            require(!bundle.method_text.empty(), axis, "method text");
            require(!bundle.borrowed_aspect.empty(), axis, "borrowed aspect");
            vars["method_text"] = bundle.method_text;
            vars["seed_block"] = seed_block(*bundle.seed);
            vars["borrowed_aspect"] = bundle.borrowed_aspect;
            break;
        case RubricAxis::novelty:
            throw JudgeError("rate(novelty): use judge_novelty_react");
    }
    return vars;
}

inline std::map<std::string, std::string> mock_params(RubricAxis axis,
                                                      const SubjectBundle& bundle) {
    std::map<std::string, std::string> params;
    std::string subject;
    if (bundle.seed) subject += json(*bundle.seed).dump();
    if (!bundle.method_text.empty()) subject += bundle.method_text;
    params["subject_digest"] = digest(subject);
    if (bundle.problem) params["problem_digest"] = digest(bundle.problem->text);
    if (!bundle.borrowed_aspect.empty()) params["aspect_digest"] = digest(bundle.borrowed_aspect);
    // The lens enters the scoring key only when it differs from the raw
    // problem statement; single-probe slots therefore score identically on
    // both relevance axes.
    if (axis == RubricAxis::relevance_lens && bundle.problem &&
        bundle.lens_text != bundle.problem->text)
        params["lens_digest"] = digest(bundle.lens_text);
    if (axis == RubricAxis::grounding && bundle.grounding_shuffled)
        params["grounding_control"] = "shuffled";
    params["scale_max"] = std::to_string(axis_scale_max(axis));
    return params;
}

struct ParsedScore {
    int score = 0;
    std::string reasoning;
    bool has_reasoning = false;
};

inline std::optional<ParsedScore> parse_score(const std::string& content, int scale_max) {
    auto obj = extract_json_object(content);
    if (!obj || !obj->contains("score") || !(*obj)["score"].is_number_integer())
        return std::nullopt;
    ParsedScore out;
    out.score = (*obj)["score"].get<int>();
    if (out.score < 1 || out.score > scale_max) return std::nullopt;
    if (obj->contains("reasoning") && (*obj)["reasoning"].is_string()) {
        out.reasoning = (*obj)["reasoning"].get<std::string>();
        out.has_reasoning = !trim(out.reasoning).empty();
    }
    return out;
}

}  // namespace judge_detail

// ---------------------------------------------------------------------------
// Point-rubric rating
// ---------------------------------------------------------------------------

// One rubric judgment. An unparseable or out-of-range reply earns exactly one
// schema reprompt; a second failure raises. Missing reasoning is accepted
// with a warning flag.
inline RubricScore rate(RubricAxis axis, const SubjectBundle& bundle, ChatProvider& judge,
                        const TemplateStore& templates) {
    const int scale_max = axis_scale_max(axis);
    const std::string template_name = axis_template(axis);
    const std::string prompt = templates.render(template_name,
                                                judge_detail::template_vars(axis, bundle));

    ChatRequest req;
    req.purpose = std::string("rate:") + axis_name(axis);
    req.template_version = templates.get(template_name).version;
    req.params = judge_detail::mock_params(axis, bundle);
    req.messages = {{"user", prompt}};
    const std::string fingerprint = request_fingerprint(req);

    ChatResponse resp = judge.chat(req);
    auto parsed = judge_detail::parse_score(resp.content, scale_max);
    if (!parsed) {
        ChatRequest retry = req;
        retry.messages.push_back({"assistant", resp.content});
        retry.messages.push_back(
            {"user", "That reply was not a valid judgment. Respond with a JSON object "
                     "{\"score\": <integer 1-" + std::to_string(scale_max) +
                     ">, \"reasoning\": \"...\"} and nothing else."});
        parsed = judge_detail::parse_score(judge.chat(retry).content, scale_max);
        if (!parsed)
            throw JudgeError(std::string("rate(") + axis_name(axis) +
                             "): invalid score after reprompt (transcript " + fingerprint + ")");
    }

    RubricScore score;
    score.axis = axis;
    score.value = parsed->score;
    score.scale_max = scale_max;
    score.reasoning = parsed->reasoning;
    score.transcript_ref = fingerprint;
    score.missing_reasoning = !parsed->has_reasoning;
    return score;
}

// ---------------------------------------------------------------------------
// ReAct novelty judge
// ---------------------------------------------------------------------------

struct SearchStep {
    std::string query;
    std::vector<ScholarRecord> results;
    int round = 0;
};

inline void to_json(json& j, const SearchStep& s) {
    j = json{{"query", s.query}, {"results", s.results}, {"round", s.round}};
}

struct NoveltyJudgment {
    RubricScore score;
    std::vector<SearchStep> steps;
    std::vector<std::string> prior_work;
    bool degraded = false;           // search provider failed mid-judgment
    bool budget_refused = false;     // judge asked for a search past the cap
};

inline void to_json(json& j, const NoveltyJudgment& n) {
    j = json{{"score", n.score},           {"steps", n.steps},
             {"prior_work", n.prior_work}, {"degraded", n.degraded},
             {"budget_refused", n.budget_refused}};
}

inline std::string format_pool_for_prompt(const SeedPool& pool) {
    if (pool.entries.empty()) return "(no seeds retrieved)";
    std::string out = "Retrieved seeds:\n";
    for (size_t i = 0; i < pool.entries.size(); ++i) {
        const auto& e = pool.entries[i];
        out += "Seed " + std::to_string(i + 1) + " [id " + e.seed.seed_id + "] (domain: " +
               domain_pretty(e.seed.domain) + ")\n";
        out += "  problem: " + e.seed.problem + "\n";
        out += "  method: " + e.seed.method + "\n";
        out += "  lens: " + e.lens_text + "\n";
    }
    return out;
}

// Alternating judge/search loop. Retrieved seeds are static context, never a
// scoring axis. At most `max_searches` searches execute; a request past the
// cap is refused and the judge is told to conclude.
inline NoveltyJudgment judge_novelty_react(const Problem& problem, const std::string& method_text,
                                           const SeedPool& static_pool, ChatProvider& judge,
                                           ScholarProvider& scholar,
                                           const TemplateStore& templates,
                                           int max_searches = 10) {
    NoveltyJudgment out;
    const std::string prompt = templates.render(
        "rubric_novelty_react",
        {{"problem_text", problem.text},
         {"method_text", method_text},
         {"pool_context", format_pool_for_prompt(static_pool)},
         {"max_searches", std::to_string(max_searches)}});

    std::vector<ChatMessage> messages = {{"user", prompt}};
    std::string seen_titles;
    int searches_done = 0;
    int parse_retries = 0;
    std::string first_fingerprint;

    // Turn bound: every turn is a search, a refusal, or the final verdict.
    const int max_turns = max_searches + 6;
    for (int turn = 0; turn < max_turns; ++turn) {
        ChatRequest req;
        req.purpose = "react_novelty";
        req.template_version = templates.get("rubric_novelty_react").version;
        req.messages = messages;
        req.params = {{"subject_digest", judge_detail::digest(method_text)},
                      {"problem_digest", judge_detail::digest(problem.text)},
                      {"searches_done", std::to_string(searches_done)},
                      {"seen_titles", seen_titles}};
        if (first_fingerprint.empty()) first_fingerprint = request_fingerprint(req);

        ChatResponse resp = judge.chat(req);
        messages.push_back({"assistant", resp.content});
        auto action = judge_detail::extract_json_object(resp.content);

        if (!action || !action->contains("action")) {
            if (++parse_retries > 1)
                throw JudgeError("novelty judge: unparseable action after reprompt (transcript " +
                                 first_fingerprint + ")");
            messages.push_back({"user",
                                "That reply was not a valid action. Respond with a single JSON "
                                "object whose \"action\" is \"search\" or \"final\"."});
            continue;
        }

        const std::string kind = action->value("action", "");
        if (kind == "search") {
            if (searches_done >= max_searches) {
                out.budget_refused = true;
                messages.push_back({"user", "Search budget exhausted (" +
                                                std::to_string(max_searches) +
                                                " searches used). Provide your final judgment now."});
                continue;
            }
            const std::string query = action->value("query", "");
            SearchStep step;
            step.query = query;
            step.round = searches_done + 1;
            std::string result_text;
            try {
                step.results = scholar.search(query, 5);
                if (step.results.empty()) {
                    result_text = "(no results)";
                } else {
                    for (const auto& r : step.results) {
                        result_text += "- " + r.title + " (" + std::to_string(r.year) + "): " +
                                       r.snippet + "\n";
                        seen_titles += (seen_titles.empty() ? "" : ",") + r.title;
                    }
                }
            } catch (const ProviderError&) {
                out.degraded = true;
                result_text = "(search unavailable; proceed without further searches)";
            }
            ++searches_done;
            out.steps.push_back(std::move(step));
            messages.push_back({"user", "Search results (round " + std::to_string(searches_done) +
                                            "):\n" + result_text});
            continue;
        }

        if (kind == "final") {
            int value = action->value("score", 0);
            if (value < 1 || value > 5) {
                if (++parse_retries > 1)
                    throw JudgeError("novelty judge: score out of range after reprompt (transcript " +
                                     first_fingerprint + ")");
                messages.push_back({"user",
                                    "Score out of range. Respond with a final action whose score "
                                    "is an integer from 1 to 5."});
                continue;
            }
            out.score.axis = RubricAxis::novelty;
            out.score.value = value;
            out.score.scale_max = 5;
            out.score.reasoning = action->value("reasoning", "");
            out.score.missing_reasoning = trim(out.score.reasoning).empty();
            out.score.transcript_ref = first_fingerprint;
            if (action->contains("prior_work"))
                for (const auto& t : (*action)["prior_work"])
                    if (t.is_string()) out.prior_work.push_back(t.get<std::string>());
            return out;
        }

        if (++parse_retries > 1)
            throw JudgeError("novelty judge: unknown action \"" + kind + "\" after reprompt");
        messages.push_back({"user", "Unknown action \"" + kind +
                                        "\". Use \"search\" or \"final\" only."});
    }
    throw JudgeError("novelty judge: no final verdict within the turn bound (transcript " +
                     first_fingerprint + ")");
}

// ---------------------------------------------------------------------------
// Pairwise judging
// ---------------------------------------------------------------------------

enum class PairwiseWinner { left, right, tie };

inline const char* pairwise_winner_name(PairwiseWinner w) {
    switch (w) {
        case PairwiseWinner::left: return "left";
        case PairwiseWinner::right: return "right";
        case PairwiseWinner::tie: return "tie";
    }
    throw Error("pairwise_winner_name: bad winner");
}

struct PairwiseVerdict {
    RubricAxis axis = RubricAxis::novelty;
    std::string left_id;
    std::string right_id;
    bool left_presented_first = true;  // the recorded permutation
    PairwiseWinner winner = PairwiseWinner::tie;
    std::string pivot_reason;
    std::string transcript_ref;
    bool reprompted_to_tie = false;
};

inline void to_json(json& j, const PairwiseVerdict& v) {
    j = json{{"axis", axis_name(v.axis)},
             {"left_id", v.left_id},
             {"right_id", v.right_id},
             {"presented_order", v.left_presented_first ? "left_first" : "right_first"},
             {"winner", pairwise_winner_name(v.winner)},
             {"pivot_reason", v.pivot_reason},
             {"transcript_ref", v.transcript_ref}};
    if (v.reprompted_to_tie) j["reprompted_to_tie"] = true;
}

// Position-randomization flags, pre-materialized from one seeded stream in
// canonical call order so concurrency cannot reorder consumption.
class PermutationTable {
public:
    static PermutationTable materialize(size_t n_calls, uint64_t seed) {
        PermutationTable t;
        t.seed_ = seed;
        DeterministicRng rng(seed);
        t.flags_.reserve(n_calls);
        for (size_t i = 0; i < n_calls; ++i) t.flags_.push_back(rng.next_bool());
        return t;
    }

    // true: the right-hand method is presented first.
    bool swapped(size_t call_index) const {
        if (call_index >= flags_.size())
            throw Error("permutation table: call index " + std::to_string(call_index) +
                        " out of range");
        return flags_[call_index];
    }

    size_t size() const { return flags_.size(); }
    uint64_t seed() const { return seed_; }

    json to_json() const {
        return json{{"seed", seed_}, {"swap_flags", flags_}};
    }

private:
    uint64_t seed_ = 0;
    std::vector<bool> flags_;
};

inline std::string pairwise_template(RubricAxis axis) {
    if (axis != RubricAxis::novelty && axis != RubricAxis::validity &&
        axis != RubricAxis::coherence)
        throw JudgeError(std::string("pairwise axis must be novelty/validity/coherence, got ") +
                         axis_name(axis));
    return std::string("pairwise_") + axis_name(axis);
}

// One pairwise comparison. `swapped` comes from the permutation table; the
// stored winner is mapped back through it, so storage is order-independent.
inline PairwiseVerdict judge_pairwise(RubricAxis axis, const Problem& problem,
                                      const std::string& left_id, const std::string& left_text,
                                      const std::string& right_id, const std::string& right_text,
                                      bool swapped, ChatProvider& judge,
                                      const TemplateStore& templates) {
    const std::string template_name = pairwise_template(axis);
    const std::string& first_text = swapped ? right_text : left_text;
    const std::string& second_text = swapped ? left_text : right_text;

    ChatRequest req;
    req.purpose = std::string("pairwise:") + axis_name(axis);
    req.template_version = templates.get(template_name).version;
    req.params = {{"axis", axis_name(axis)},
                  {"first_digest", judge_detail::digest(first_text)},
                  {"second_digest", judge_detail::digest(second_text)}};
    req.messages = {{"user", templates.render(template_name,
                                              {{"problem_text", problem.text},
                                               {"first_method", first_text},
                                               {"second_method", second_text}})}};
    const std::string fingerprint = request_fingerprint(req);

    PairwiseVerdict verdict;
    verdict.axis = axis;
    verdict.left_id = left_id;
    verdict.right_id = right_id;
    verdict.left_presented_first = !swapped;
    verdict.transcript_ref = fingerprint;

    auto interpret = [&](const std::string& content) -> std::optional<PairwiseWinner> {
        auto obj = judge_detail::extract_json_object(content);
        if (!obj) return std::nullopt;
        const std::string raw = obj->value("winner", "");
        verdict.pivot_reason = obj->value("reason", "");
        if (raw == "tie") return PairwiseWinner::tie;
        if (raw == "first") return swapped ? PairwiseWinner::right : PairwiseWinner::left;
        if (raw == "second") return swapped ? PairwiseWinner::left : PairwiseWinner::right;
        return std::nullopt;
    };

    auto winner = interpret(judge.chat(req).content);
    if (!winner) {
        ChatRequest retry = req;
        retry.messages.push_back(
            {"user", "That reply named neither side. Respond with a JSON object whose "
                     "\"winner\" is \"first\", \"second\", or \"tie\"."});
        winner = interpret(judge.chat(retry).content);
        if (!winner) {
            verdict.winner = PairwiseWinner::tie;
            verdict.reprompted_to_tie = true;
            return verdict;
        }
    }
    verdict.winner = *winner;
    return verdict;
}

// ---------------------------------------------------------------------------
// Template lint
// ---------------------------------------------------------------------------

// Checks every rubric template for its anchor set and the tie-default
// sentence, and the pairwise templates for the tie-breaking instruction.
inline std::vector<std::string> lint_judge_templates(const TemplateStore& templates) {
    std::vector<std::string> problems;
    // Whitespace-insensitive: template prose may wrap anywhere.
    auto squash = [](const std::string& s) {
        std::string out;
        bool in_space = false;
        for (char c : s) {
            if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
                if (!in_space && !out.empty()) out.push_back(' ');
                in_space = true;
            } else {
                out.push_back(c);
                in_space = false;
            }
        }
        return out;
    };
    auto check = [&](const std::string& name, const std::string& needle) {
        if (!templates.has(name)) {
            problems.push_back("missing template: " + name);
            return;
        }
        if (!contains(squash(templates.get(name).text), squash(needle)))
            problems.push_back("template " + name + ": missing \"" + needle + "\"");
    };

    for (RubricAxis axis :
         {RubricAxis::specificity, RubricAxis::grounding, RubricAxis::relevance_naive,
          RubricAxis::relevance_lens, RubricAxis::novelty, RubricAxis::validity,
          RubricAxis::coherence, RubricAxis::incorporation, RubricAxis::method_specificity}) {
        const std::string name = axis_template(axis);
        check(name, kTieDefaultSentence);
        for (int anchor = 1; anchor <= axis_scale_max(axis); ++anchor)
            check(name, std::to_string(anchor) + " =");
    }
    for (const char* name : {"pairwise_novelty", "pairwise_validity", "pairwise_coherence"})
        check(name, "Break ties only when the methods are genuinely indistinguishable");
    return problems;
}

}  // namespace papergym
