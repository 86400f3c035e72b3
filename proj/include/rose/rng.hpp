#pragma once

#include <cstdint>
#include <random>

namespace rose {

// Deterministic random stream. std::mt19937_64 output is fully specified by
// the standard; the distribution transforms below are ours, so every draw is
// reproducible across platforms (the std:: distributions are not).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0,1)
    double next_unit() { return double(gen_() >> 11) * 0x1.0p-53; }

    float next_unit_f() { return float(gen_() >> 40) * 0x1.0p-24f; }

    // uniform in [a,b)
    double uniform(double a, double b) { return a + (b - a) * next_unit(); }

    // uniform integer in [0,n); n up to 2^32. Modulo bias is < n/2^64.
    int next_int(int n) { return int(gen_() % uint64_t(n)); }

    bool bernoulli(double p) { return next_unit() < p; }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            auto j = gen_() % uint64_t(i + 1);
            std::swap(first[i], first[decltype(i)(j)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace rose
