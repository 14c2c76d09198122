#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace papergym {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct StatsError : Error {
    using Error::Error;
};

// Raised by provider clients once retries are exhausted. Carries the request
// fingerprint so the failing call can be located in the manifest.
struct ProviderError : Error {
    ProviderError(const std::string& msg, std::string fp = "", bool transient = false)
        : Error(msg), fingerprint(std::move(fp)), retryable(transient) {}
    std::string fingerprint;
    bool retryable = false;
};

struct JudgeError : Error {
    using Error::Error;
};

struct SynthesisError : Error {
    SynthesisError(const std::string& msg, std::string transcript = "")
        : Error(msg), transcript_ref(std::move(transcript)) {}
    std::string transcript_ref;
};

struct SandboxError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 14695981039346656037ULL) {
    uint64_t hash = seed;
    for (unsigned char byte : data) {
        hash ^= byte;
        hash *= 1099511628211ULL;
    }
    return hash;
}

inline std::string to_hex64(uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Strings
// ---------------------------------------------------------------------------

inline std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    if (from.empty()) return s;
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path.string());
    out << content;
}

// Reads a line-delimited JSON file. Blank lines are skipped; a malformed line
// raises with its 1-based line number.
inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path.string());
    std::vector<json> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": bad JSON line: " + e.what());
        }
    }
    return records;
}

inline void append_jsonl(const std::filesystem::path& path, const json& record) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to file: " + path.string());
    out << record.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Display rounding
// ---------------------------------------------------------------------------

// Half-even decimal rounding of a double, applied to its 16-significant-digit
// decimal form. Use ratio_display() instead when an exact fraction is known.
inline std::string format_round_half_even(double value, int decimals) {
    if (!std::isfinite(value)) return "nan";
    bool neg = value < 0;
    double mag = neg ? -value : value;

    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.15e", mag);
    std::string s(buf);
    size_t epos = s.find('e');
    int exp10 = std::stoi(s.substr(epos + 1));
    std::string digits;
    for (size_t i = 0; i < epos; ++i)
        if (std::isdigit(static_cast<unsigned char>(s[i]))) digits.push_back(s[i]);
    // digits = d0.d1d2... * 10^exp10; keep (exp10 + decimals + 1) digits.
    int keep = exp10 + decimals + 1;
    if (keep <= 0) {
        digits = "0";
        keep = 1;
        exp10 = -decimals;
    }
    while (static_cast<int>(digits.size()) < keep + 1) digits.push_back('0');

    bool round_up = false;
    if (static_cast<int>(digits.size()) > keep) {
        char next = digits[static_cast<size_t>(keep)];
        bool rest_nonzero = digits.find_first_not_of('0', static_cast<size_t>(keep) + 1) != std::string::npos;
        if (next > '5' || (next == '5' && rest_nonzero)) {
            round_up = true;
        } else if (next == '5' && !rest_nonzero) {
            round_up = ((digits[static_cast<size_t>(keep) - 1] - '0') % 2) == 1;  // ties to even
        }
        digits.resize(static_cast<size_t>(keep));
    }
    if (round_up) {
        int i = keep - 1;
        while (i >= 0) {
            if (digits[static_cast<size_t>(i)] == '9') {
                digits[static_cast<size_t>(i)] = '0';
                --i;
            } else {
                digits[static_cast<size_t>(i)]++;
                break;
            }
        }
        if (i < 0) {
            digits.insert(digits.begin(), '1');
            ++exp10;
        }
    }

    // Reassemble fixed-point with `decimals` fractional digits.
    int int_digits = exp10 + 1;
    std::string out;
    if (neg) out.push_back('-');
    if (int_digits <= 0) {
        out += "0.";
        out.append(static_cast<size_t>(-int_digits), '0');
        out += digits;
    } else {
        out += digits.substr(0, static_cast<size_t>(int_digits));
        if (decimals > 0) {
            out.push_back('.');
            out += digits.substr(static_cast<size_t>(int_digits));
        }
    }
    // Pad fractional part if rounding shortened it.
    if (decimals > 0) {
        size_t dot = out.find('.');
        if (dot == std::string::npos) {
            out.push_back('.');
            dot = out.size() - 1;
        }
        while (out.size() - dot - 1 < static_cast<size_t>(decimals)) out.push_back('0');
    }
    return out;
}

// Exact half-even rendering of num/den at `decimals` places (num, den >= 0).
inline std::string ratio_display(unsigned __int128 num, unsigned __int128 den, int decimals) {
    if (den == 0) throw StatsError("ratio_display: zero denominator");
    unsigned __int128 scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    unsigned __int128 scaled = num * scale;
    unsigned __int128 q = scaled / den;
    unsigned __int128 r = scaled % den;
    if (2 * r > den || (2 * r == den && (q & 1) == 1)) ++q;

    std::string digits;
    if (q == 0) digits = "0";
    while (q > 0) {
        digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(q % 10)));
        q /= 10;
    }
    while (static_cast<int>(digits.size()) <= decimals) digits.insert(digits.begin(), '0');
    if (decimals == 0) return digits;
    return digits.substr(0, digits.size() - static_cast<size_t>(decimals)) + "." +
           digits.substr(digits.size() - static_cast<size_t>(decimals));
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

// mt19937_64 with rejection-sampled bounded draws. std::mt19937_64 output is
// fully specified by the standard; avoiding std distributions keeps draws
// identical across standard-library implementations.
inline constexpr const char* kRngAlgorithmName = "mt19937_64-rejection";

class DeterministicRng {
public:
    explicit DeterministicRng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, bound); bound >= 1.
    uint64_t next_below(uint64_t bound) {
        if (bound == 0) throw Error("next_below: zero bound");
        uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
        for (;;) {
            uint64_t v = engine_();
            if (v <= limit) return v % bound;
        }
    }

    bool next_bool() { return (engine_() & 1) != 0; }

private:
    std::mt19937_64 engine_;
};

// First `count` indices of a seeded Fisher-Yates shuffle over [0, total).
inline std::vector<size_t> sample_without_replacement(size_t count, size_t total, uint64_t seed) {
    if (count > total) throw Error("sample_without_replacement: count exceeds population");
    std::vector<size_t> idx(total);
    for (size_t i = 0; i < total; ++i) idx[i] = i;
    DeterministicRng rng(seed);
    for (size_t i = 0; i < count; ++i) {
        size_t j = i + static_cast<size_t>(rng.next_below(total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

inline int64_t now_unix_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace papergym
