#pragma once

#include <array>
#include <optional>
#include <string>

#include <papergym/util.hpp>

namespace papergym {

// The seven ML domains. Enum order is the canonical order (alphabetical by
// canonical token); probe merging and table layouts iterate in this order.
enum class DomainLabel {
    CV = 0,
    IR_REC,
    LLM_NLP,
    MULTIMODAL,
    RL,
    ROBOTICS,
    SPEECH,
};

inline constexpr size_t kDomainCount = 7;

inline constexpr std::array<DomainLabel, kDomainCount> kAllDomains = {
    DomainLabel::CV,       DomainLabel::IR_REC, DomainLabel::LLM_NLP,
    DomainLabel::MULTIMODAL, DomainLabel::RL,   DomainLabel::ROBOTICS,
    DomainLabel::SPEECH,
};

inline const char* domain_token(DomainLabel d) {
    switch (d) {
        case DomainLabel::CV: return "CV";
        case DomainLabel::IR_REC: return "IR_REC";
        case DomainLabel::LLM_NLP: return "LLM_NLP";
        case DomainLabel::MULTIMODAL: return "MULTIMODAL";
        case DomainLabel::RL: return "RL";
        case DomainLabel::ROBOTICS: return "ROBOTICS";
        case DomainLabel::SPEECH: return "SPEECH";
    }
    throw Error("domain_token: bad label");
}

// Human-readable form used in reports.
inline const char* domain_pretty(DomainLabel d) {
    switch (d) {
        case DomainLabel::CV: return "computer vision";
        case DomainLabel::IR_REC: return "IR/recommendation";
        case DomainLabel::LLM_NLP: return "LLM/NLP";
        case DomainLabel::MULTIMODAL: return "multimodal";
        case DomainLabel::RL: return "reinforcement learning";
        case DomainLabel::ROBOTICS: return "robotics";
        case DomainLabel::SPEECH: return "speech";
    }
    throw Error("domain_pretty: bad label");
}

namespace detail {
// Collapse separators so "LLM/NLP", "llm-nlp" and "llm nlp" compare equal.
inline std::string domain_key(const std::string& raw) {
    std::string key;
    for (char c : to_lower(trim(raw))) {
        if (c == '/' || c == '-' || c == ' ' || c == '_') {
            if (!key.empty() && key.back() != '_') key.push_back('_');
        } else {
            key.push_back(c);
        }
    }
    return key;
}
}  // namespace detail

inline std::optional<DomainLabel> try_parse_domain(const std::string& raw) {
    const std::string key = detail::domain_key(raw);
    if (key == "cv" || key == "computer_vision" || key == "vision") return DomainLabel::CV;
    if (key == "ir_rec" || key == "ir_recommendation" || key == "ir" || key == "recommendation" ||
        key == "recsys" || key == "ir_recsys")
        return DomainLabel::IR_REC;
    if (key == "llm_nlp" || key == "nlp" || key == "llm" || key == "nlp_llm") return DomainLabel::LLM_NLP;
    if (key == "multimodal" || key == "mm") return DomainLabel::MULTIMODAL;
    if (key == "rl" || key == "reinforcement_learning") return DomainLabel::RL;
    if (key == "robotics") return DomainLabel::ROBOTICS;
    if (key == "speech") return DomainLabel::SPEECH;
    return std::nullopt;
}

inline DomainLabel parse_domain(const std::string& raw) {
    auto d = try_parse_domain(raw);
    if (!d) throw ValidationError("unknown domain label: \"" + raw + "\"");
    return *d;
}

}  // namespace papergym
