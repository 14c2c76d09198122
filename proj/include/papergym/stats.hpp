#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <papergym/util.hpp>

namespace papergym::stats {

using u128 = unsigned __int128;

struct PairwiseTally {
    int wins = 0;
    int losses = 0;
    int ties = 0;
    int decisive() const { return wins + losses; }
    int total() const { return wins + losses + ties; }
};

struct DiscordantPair {
    int b = 0;  // property holds only under the first condition
    int c = 0;  // property holds only under the second condition
};

namespace detail {

inline constexpr int kMaxExactN = 120;

inline void check_exact_range(int n, const char* what) {
    if (n > kMaxExactN)
        throw StatsError(std::string(what) + ": n=" + std::to_string(n) +
                         " exceeds the exact-arithmetic range (" + std::to_string(kMaxExactN) + ")");
}

// C(n, k) in exact 128-bit arithmetic. The running product stays integral
// because each prefix is itself a binomial coefficient.
inline u128 binomial_coefficient(int n, int k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    u128 c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<u128>(n - k + i) / static_cast<u128>(i);
    }
    return c;
}

// Sum_{i=lo..hi} C(n, i).
inline u128 binomial_tail(int n, int lo, int hi) {
    u128 sum = 0;
    for (int i = lo; i <= hi; ++i) sum += binomial_coefficient(n, i);
    return sum;
}

inline double ratio_to_double(u128 num, int pow2) {
    long double v = static_cast<long double>(num);
    return static_cast<double>(std::ldexp(v, -pow2));
}

}  // namespace detail

// Exact p as a capped fraction num / 2^pow2. Kept alongside the double so
// reports can render the value without float rounding artifacts.
struct ExactP {
    u128 num = 0;
    int pow2 = 0;
    double value() const { return detail::ratio_to_double(num, pow2); }
    std::string display(int decimals = 2) const {
        return ratio_display(num, static_cast<u128>(1) << pow2, decimals);
    }
};

// Two-sided exact binomial test on decisive outcomes under a fair-coin null:
// p = min(1, 2 * min(P[X <= w], P[X >= w])) with X ~ Binomial(n, 1/2).
inline ExactP binomial_two_sided_exact(const PairwiseTally& tally) {
    if (tally.wins < 0 || tally.losses < 0 || tally.ties < 0)
        throw StatsError("binomial_two_sided: negative tally");
    const int n = tally.decisive();
    if (n == 0) throw StatsError("binomial_two_sided: no decisive outcomes (all ties)");
    detail::check_exact_range(n, "binomial_two_sided");
    const int w = tally.wins;
    u128 lower = detail::binomial_tail(n, 0, w);
    u128 upper = detail::binomial_tail(n, w, n);
    u128 twice = 2 * std::min(lower, upper);
    u128 cap = static_cast<u128>(1) << n;
    return ExactP{std::min(twice, cap), n};
}

inline double binomial_two_sided(const PairwiseTally& tally) {
    return binomial_two_sided_exact(tally).value();
}

// McNemar chi-squared statistic (b - c)^2 / (b + c).
inline double mcnemar_chi2(const DiscordantPair& d) {
    if (d.b < 0 || d.c < 0) throw StatsError("mcnemar_chi2: negative count");
    if (d.b + d.c == 0) throw StatsError("mcnemar_chi2: no discordant pairs");
    double diff = static_cast<double>(d.b - d.c);
    return diff * diff / static_cast<double>(d.b + d.c);
}

// Exact two-sided binomial McNemar:
// p = min(1, 2 * Sum_{i=0}^{min(b,c)} C(b+c, i) / 2^(b+c)).
inline ExactP mcnemar_exact_p(const DiscordantPair& d) {
    if (d.b < 0 || d.c < 0) throw StatsError("mcnemar_exact: negative count");
    const int m = d.b + d.c;
    if (m == 0) throw StatsError("mcnemar_exact: no discordant pairs");
    detail::check_exact_range(m, "mcnemar_exact");
    u128 sum = detail::binomial_tail(m, 0, std::min(d.b, d.c));
    u128 twice = 2 * sum;
    u128 cap = static_cast<u128>(1) << m;
    return ExactP{std::min(twice, cap), m};
}

inline double mcnemar_exact(const DiscordantPair& d) {
    return mcnemar_exact_p(d).value();
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample (n-1); 0 when n < 2
    size_t n = 0;
    std::string display() const {
        if (n == 0) return "-";
        return format_round_half_even(mean, 2) + " +/- " + format_round_half_even(std, 2);
    }
};

inline MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    out.n = values.size();
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) {
            double d = v - out.mean;
            ss += d * d;
        }
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

inline std::string percent_display(int count, int total) {
    if (total == 0) return "-";
    return format_round_half_even(100.0 * count / total, 0) + "%";
}

}  // namespace papergym::stats
