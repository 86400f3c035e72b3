#pragma once

// Test-only exact-arithmetic oracles. Everything here is integer arithmetic in
// unsigned __int128, deliberately independent of the library's log-domain path.

#include <cmath>
#include <stdexcept>

namespace oracle {

using u128 = unsigned __int128;

inline u128 binomial(int s, int k) {
    if (k < 0 || k > s) return 0;
    if (k > s - k) k = s - k;
    u128 num = 1;
    for (int i = 1; i <= k; ++i) num = num * u128(s - k + i) / u128(i);
    return num;
}

inline u128 ipow(u128 base, int e) {
    u128 r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

inline long double log2_u128(u128 v) {
    if (v == 0) throw std::domain_error("log2 of zero");
    return std::log2l((long double)v);
}

// log2 P(M >= m) for M ~ Binomial(s, 1/c), as an exact integer ratio:
// numerator = sum_{k=m..s} C(s,k) (c-1)^(s-k), denominator = c^s.
// Fits u128 for s <= 30, c <= 10 (c^s <= 10^30 < 2^128). Tails above 1/2 go
// through the exact integer complement and log1p so the log keeps full
// relative precision near zero.
inline long double log2_binomial_tail_exact(int s, int m, int c) {
    if (m <= 0) return 0.0L;
    u128 num = 0;
    for (int k = m; k <= s; ++k) num += binomial(s, k) * ipow(u128(c - 1), s - k);
    u128 den = ipow(u128(c), s);
    if (num >= den - num) {
        long double q = (long double)(den - num) / (long double)den;
        return std::log1p(-q) / std::log(2.0L);
    }
    return log2_u128(num) - log2_u128(den);
}

}  // namespace oracle
