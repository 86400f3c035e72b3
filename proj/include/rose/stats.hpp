#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rose::stats {

// Lanczos approximation of log(gamma(x)), x > 0. Accurate to better than
// 1e-12 for the argument range used here (binomial coefficients up to a few
// thousand trials).
inline double log_gamma(double x) {
    static const double g = 7.0;
    static const double coeff[9] = {
        0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
        771.32342877765313,   -176.61502916214059,   12.507343278686905,
        -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
    if (x <= 0.0) throw std::domain_error("log_gamma: x must be positive");
    if (x < 0.5) {
        // reflection, not hit by binomial-coefficient callers
        return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
    }
    x -= 1.0;
    double a = coeff[0];
    double t = x + g + 0.5;
    for (int i = 1; i < 9; ++i) a += coeff[i] / (x + double(i));
    return 0.5 * std::log(2.0 * M_PI) + (x + 0.5) * std::log(t) - t + std::log(a);
}

namespace detail {

constexpr double kLog2E = 1.4426950408889634074;  // 1/ln(2)

// Exact 64-bit path: C(s,k) fits an unsigned 64-bit integer for s <= 60.
inline uint64_t binomial_u64(int s, int k) {
    if (k < 0 || k > s) return 0;
    if (k > s - k) k = s - k;
    uint64_t num = 1;
    for (int i = 1; i <= k; ++i) {
        // multiply then divide stays exact because every prefix is itself a
        // binomial coefficient
        num = num * uint64_t(s - k + i) / uint64_t(i);
    }
    return num;
}

inline double log2_binomial(int s, int k) {
    if (s <= 60) return std::log2(double(binomial_u64(s, k)));
    return (log_gamma(double(s) + 1.0) - log_gamma(double(k) + 1.0) -
            log_gamma(double(s - k) + 1.0)) * kLog2E;
}

inline double log2_sum_range(int s, int k_lo, int k_hi, double log2_p, double log2_q) {
    std::vector<double> terms;
    terms.reserve(size_t(k_hi - k_lo) + 1);
    double peak = -HUGE_VAL;
    for (int k = k_lo; k <= k_hi; ++k) {
        double t = log2_binomial(s, k) + double(k) * log2_p + double(s - k) * log2_q;
        terms.push_back(t);
        if (t > peak) peak = t;
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp2(t - peak);
    return peak + std::log2(acc);
}

// log2 P(M >= m) for M ~ Binomial(s, p), with the per-trial log2
// probabilities supplied by the caller so p = 1/c loses nothing to rounding.
// When the tail is larger than 1/2 its log is recovered from the complement
// via log1p, which keeps the RELATIVE log error small even for logs near 0.
inline double log2_tail(int s, int m, double log2_p, double log2_q) {
    if (m <= 0) return 0.0;
    if (m == s) return double(s) * log2_p;
    double direct = log2_sum_range(s, m, s, log2_p, log2_q);
    if (direct <= -1.0) return direct;
    double lower = log2_sum_range(s, 0, m - 1, log2_p, log2_q);
    return std::log1p(-std::exp2(lower)) * kLog2E;
}

}  // namespace detail

// log2 of the upper binomial tail P(M >= m), M ~ Binomial(s, p). Computed by
// log-domain summation of the (at most s+1) tail terms, so values as small as
// 2^-350 remain representable.
inline double log2_binomial_tail(int s, int m, double p) {
    if (s < 1) throw std::domain_error("log2_binomial_tail: s must be >= 1");
    if (m < 0 || m > s) throw std::domain_error("log2_binomial_tail: need 0 <= m <= s");
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("log2_binomial_tail: need 0 < p < 1");
    return detail::log2_tail(s, m, std::log2(p), std::log1p(-p) * detail::kLog2E);
}

// Rarity of m matches out of s triggers, c classes: R = -log2 P(M >= m) with
// p = 1/c. The Verifier's "value of the proof", in bits.
struct RarityResult {
    int s = 0;
    int m = 0;
    int c = 0;
    double log2_pvalue = 0.0;  // <= 0
    double rarity_bits = 0.0;  // = -log2_pvalue, >= 0

    // Reports print whole bits, truncated.
    int floor_bits() const { return int(rarity_bits); }
};

inline RarityResult rarity(int s, int m, int c) {
    if (s < 1) throw std::domain_error("rarity: s must be >= 1");
    if (m < 0 || m > s) throw std::domain_error("rarity: need 0 <= m <= s");
    if (c < 2) throw std::domain_error("rarity: c must be >= 2");
    double log2_c = std::log2(double(c));
    double lp;
    if (m == 0) {
        lp = 0.0;
    } else if (m == s) {
        lp = -double(s) * log2_c;  // exact endpoint: rarity = s*log2(c)
    } else {
        lp = detail::log2_tail(s, m, -log2_c, std::log2(double(c - 1)) - log2_c);
    }
    RarityResult r;
    r.s = s;
    r.m = m;
    r.c = c;
    r.log2_pvalue = lp;
    r.rarity_bits = lp == 0.0 ? 0.0 : -lp;
    return r;
}

// Hoeffding bound on the same tail: P(M >= m) <= exp(-2 s (r - 1/c)^2) for
// r = m/s > 1/c. Upper-bounds the p-value, hence LOWER-bounds exact rarity.
inline double rarity_hoeffding(int s, int m, int c) {
    if (s < 1) throw std::domain_error("rarity_hoeffding: s must be >= 1");
    if (m < 0 || m > s) throw std::domain_error("rarity_hoeffding: need 0 <= m <= s");
    if (c < 2) throw std::domain_error("rarity_hoeffding: c must be >= 2");
    double r = double(m) / double(s);
    double p = 1.0 / double(c);
    if (r <= p) throw std::domain_error("rarity_hoeffding: bound vacuous for m/s <= 1/c");
    double d = r - p;
    return 2.0 * double(s) * d * d * detail::kLog2E;
}

// Number of triggers needed so the Hoeffding bound certifies R bits at
// recovery rate r: smallest integer s >= R ln(2) / (2 (r - 1/c)^2).
inline int required_triggers(double R, double r, int c) {
    if (c < 2) throw std::domain_error("required_triggers: c must be >= 2");
    if (!(R > 0.0)) throw std::domain_error("required_triggers: R must be positive");
    double p = 1.0 / double(c);
    if (r <= p) throw std::domain_error("required_triggers: need r > 1/c");
    if (r > 1.0) throw std::domain_error("required_triggers: r is a rate in (1/c, 1]");
    double d = r - p;
    double s = R * M_LN2 / (2.0 * d * d);
    int si = int(std::ceil(s));
    return si < 1 ? 1 : si;
}

// Smallest match count whose exact rarity reaches R_min. Inverse of the tail,
// used by the Verifier to phrase the grant policy as a match threshold.
inline int match_threshold(int s, int c, double R_min) {
    if (s < 1) throw std::domain_error("match_threshold: s must be >= 1");
    if (c < 2) throw std::domain_error("match_threshold: c must be >= 2");
    if (R_min < 0.0) throw std::domain_error("match_threshold: R_min must be >= 0");
    if (double(s) * std::log2(double(c)) < R_min)
        throw std::domain_error("match_threshold: unreachable rarity, s*log2(c) < R_min");
    for (int m = 0; m <= s; ++m) {
        if (rarity(s, m, c).rarity_bits >= R_min) return m;
    }
    return s;  // not reached: m = s passes the reachability check above
}

// Expected forgery cost against each protocol level, in units of one network
// inference (omega_F). Gradient passes count double; hash evaluations are
// weighted by hash_cost_ratio = omega_H / omega_F.
struct WorkEstimate {
    int level = 0;
    int s = 0;
    int t = 0;
    int c = 0;
    double R = 0.0;
    double hash_cost_ratio = 1.0;
    double cost_inferences = 0.0;  // forward/gradient work, in omega_F units
    double cost_hashes = 0.0;      // hash evaluations, in omega_H units
    double expected_cost = 0.0;    // cost_inferences + ratio * cost_hashes
};

inline WorkEstimate work_model(int level, int s, int t, int c = 2, double R = 0.0,
                               double hash_cost_ratio = 1.0) {
    if (s < 1 || t < 1) throw std::domain_error("work_model: s and t must be >= 1");
    if (c < 2) throw std::domain_error("work_model: c must be >= 2");
    if (hash_cost_ratio <= 0.0) throw std::domain_error("work_model: hash cost ratio must be positive");
    WorkEstimate w;
    w.level = level;
    w.s = s;
    w.t = t;
    w.c = c;
    w.R = R;
    w.hash_cost_ratio = hash_cost_ratio;
    w.cost_inferences = 2.0 * double(s) * double(t);
    switch (level) {
        case 0:
            w.cost_hashes = 0.0;
            break;
        case 1:
            // LSB-flip variant, the attacker's cheaper strategy
            w.cost_hashes = double(s) * double(c);
            break;
        case 2:
            if (R < 0.0) throw std::domain_error("work_model: R must be >= 0 for level 2");
            w.cost_hashes = double(s) * std::exp2(R);
            break;
        default:
            throw std::domain_error("work_model: level must be 0, 1 or 2");
    }
    w.expected_cost = w.cost_inferences + w.hash_cost_ratio * w.cost_hashes;
    return w;
}

}  // namespace rose::stats
