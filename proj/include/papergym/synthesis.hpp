#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <papergym/conditions.hpp>
#include <papergym/judges.hpp>
#include <papergym/providers.hpp>
#include <papergym/templates.hpp>

namespace papergym {

struct SynthesizedMethod {
    std::string problem_id;
    Condition condition = Condition::A;
    std::string method_text;
    std::string rationale_text;
    std::vector<Attribution> inspired_by;
    int round = 1;
};

inline void to_json(json& j, const SynthesizedMethod& m) {
    j = json{{"problem_id", m.problem_id},   {"condition", condition_name(m.condition)},
             {"method_text", m.method_text}, {"rationale_text", m.rationale_text},
             {"inspired_by", m.inspired_by}, {"round", m.round}};
}

// Judge feedback carried into a re-synthesis round.
struct LoopFeedback {
    std::string prior_method;
    std::string judge_reasoning;
    std::vector<std::string> prior_work;
};

namespace synthesis_detail {

inline std::string seed_section(const ConditionedPool& pool) {
    if (pool.condition == Condition::A || pool.pool.entries.empty())
        return "No seeds were retrieved for this condition; work from the problem statement alone.";
    return format_pool_for_prompt(pool.pool);
}

inline std::string joined_seed_ids(const ConditionedPool& pool) {
    std::string out;
    for (const auto& e : pool.pool.entries) out += (out.empty() ? "" : ",") + e.seed.seed_id;
    return out;
}

inline std::string prior_work_block(const std::vector<std::string>& titles) {
    if (titles.empty()) return "(none surfaced)";
    std::string out;
    for (const auto& t : titles) out += "- " + t + "\n";
    return out;
}

struct ParsedSynthesis {
    std::string method;
    std::string rationale;
    std::vector<Attribution> inspired_by;
};

// Returns the schema violation, or nullopt and fills `out` on success.
inline std::optional<std::string> try_parse(const std::string& content, ParsedSynthesis& out) {
    auto obj = judge_detail::extract_json_object(content);
    if (!obj) return "no JSON object found in the reply";
    if (!obj->contains("method") || !(*obj)["method"].is_string())
        return "missing string field \"method\"";
    out.method = (*obj)["method"].get<std::string>();
    if (trim(out.method).empty()) return "field \"method\" is empty";
    out.rationale = obj->value("rationale", "");
    out.inspired_by.clear();
    if (obj->contains("inspired_by")) {
        if (!(*obj)["inspired_by"].is_array()) return "\"inspired_by\" is not an array";
        for (const auto& item : (*obj)["inspired_by"]) {
            if (!item.is_object() || !item.contains("seed_id") || !item.contains("borrowed_aspect"))
                return "inspired_by entries need seed_id and borrowed_aspect";
            Attribution a;
            a.seed_id = item["seed_id"].get<std::string>();
            a.borrowed_aspect = item["borrowed_aspect"].get<std::string>();
            if (trim(a.borrowed_aspect).empty())
                return "inspired_by entry for " + a.seed_id + " has an empty borrowed_aspect";
            out.inspired_by.push_back(std::move(a));
        }
    }
    return std::nullopt;
}

}  // namespace synthesis_detail

// Composes the conditioned pool into a candidate method. Each pool entry is
// presented with its lens text verbatim; condition A presents no seeds. A
// schema-violating reply earns exactly one repair reprompt.
inline SynthesizedMethod synthesize(const Problem& problem, const ConditionedPool& pool,
                                    ChatProvider& chat, const TemplateStore& templates,
                                    int round = 1,
                                    const std::optional<LoopFeedback>& feedback = std::nullopt) {
    if (round >= 2 && !feedback)
        throw SynthesisError("re-synthesis rounds need loop feedback");

    const std::string template_name = feedback ? "resynthesize" : "synthesize";
    std::map<std::string, std::string> vars = {
        {"problem_id", problem.problem_id},
        {"condition", condition_name(pool.condition)},
        {"problem_text", problem.text},
        {"seed_section", synthesis_detail::seed_section(pool)}};
    if (feedback) {
        vars["round"] = std::to_string(round);
        vars["prior_method"] = feedback->prior_method;
        vars["judge_reasoning"] = feedback->judge_reasoning;
        vars["prior_work"] = synthesis_detail::prior_work_block(feedback->prior_work);
    }

    ChatRequest req;
    req.purpose = "synthesize";
    req.template_version = templates.get(template_name).version;
    req.params = {{"problem_id", problem.problem_id},
                  {"condition", condition_name(pool.condition)},
                  {"round", std::to_string(round)},
                  {"seed_ids", synthesis_detail::joined_seed_ids(pool)}};
    req.messages = {{"user", templates.render(template_name, vars)}};
    const std::string fingerprint = request_fingerprint(req);

    synthesis_detail::ParsedSynthesis parsed;
    auto violation = synthesis_detail::try_parse(chat.chat(req).content, parsed);
    if (violation) {
        ChatRequest repair = req;
        repair.messages.push_back(
            {"user", "Your reply did not match the required schema (" + *violation +
                     "). Respond again with one fenced JSON object with fields method, "
                     "rationale, and inspired_by[{seed_id, borrowed_aspect}]."});
        violation = synthesis_detail::try_parse(chat.chat(repair).content, parsed);
        if (violation)
            throw SynthesisError("unparseable synthesis output after reprompt: " + *violation,
                                 fingerprint);
    }

    SynthesizedMethod method;
    method.problem_id = problem.problem_id;
    method.condition = pool.condition;
    method.method_text = parsed.method;
    method.rationale_text = parsed.rationale;
    method.inspired_by = std::move(parsed.inspired_by);
    method.round = round;
    return method;
}

// ---------------------------------------------------------------------------
// Novelty-guided iteration loop
// ---------------------------------------------------------------------------

struct LoopRound {
    SynthesizedMethod method;
    NoveltyJudgment judgment;
    std::string feedback_passed;  // feedback handed to the NEXT round; empty on the last
};

inline void to_json(json& j, const LoopRound& r) {
    j = json{{"method", r.method}, {"judgment", r.judgment},
             {"feedback_passed", r.feedback_passed}};
}

enum class LoopTermination { threshold_met, max_rounds };

inline const char* loop_termination_name(LoopTermination t) {
    return t == LoopTermination::threshold_met ? "threshold_met" : "max_rounds";
}

struct LoopTrace {
    std::vector<LoopRound> rounds;
    LoopTermination terminated_by = LoopTermination::threshold_met;
};

inline void to_json(json& j, const LoopTrace& t) {
    j = json{{"rounds", t.rounds}, {"terminated_by", loop_termination_name(t.terminated_by)}};
}

// Raised when the judge fails mid-loop; carries the rounds completed so far
// so the orchestrator can persist them and mark the cell incomplete.
struct LoopError : Error {
    LoopError(const std::string& msg, LoopTrace trace)
        : Error(msg), partial(std::move(trace)) {}
    LoopTrace partial;
};

using NoveltyJudgeFn = std::function<NoveltyJudgment(const SynthesizedMethod&)>;

// Round 1 is a plain synthesis; every later round re-synthesizes with the
// previous judge's reasoning and surfaced prior work. Stops at the first
// score >= threshold or after max_rounds.
inline LoopTrace run_novelty_loop(const Problem& problem, const ConditionedPool& pool,
                                  ChatProvider& chat, const NoveltyJudgeFn& novelty_judge,
                                  int threshold, int max_rounds,
                                  const TemplateStore& templates) {
    if (threshold < 1 || threshold > 5)
        throw ValidationError("loop threshold must be in [1, 5]");
    if (max_rounds < 1) throw ValidationError("loop max_rounds must be >= 1");

    LoopTrace trace;
    std::optional<LoopFeedback> feedback;
    for (int round = 1; round <= max_rounds; ++round) {
        SynthesizedMethod method = synthesize(problem, pool, chat, templates, round, feedback);
        NoveltyJudgment judgment;
        try {
            judgment = novelty_judge(method);
        } catch (const std::exception& e) {
            throw LoopError(std::string("novelty judge failed at round ") +
                                std::to_string(round) + ": " + e.what(),
                            std::move(trace));
        }

        LoopRound entry;
        entry.method = std::move(method);
        entry.judgment = judgment;
        trace.rounds.push_back(std::move(entry));

        if (judgment.score.value >= threshold) {
            trace.terminated_by = LoopTermination::threshold_met;
            return trace;
        }
        if (round == max_rounds) {
            trace.terminated_by = LoopTermination::max_rounds;
            return trace;
        }
        feedback = LoopFeedback{trace.rounds.back().method.method_text,
                                judgment.score.reasoning, judgment.prior_work};
        trace.rounds.back().feedback_passed =
            judgment.score.reasoning + "\n" +
            synthesis_detail::prior_work_block(judgment.prior_work);
    }
    return trace;  // unreachable
}

}  // namespace papergym
