// Counter-based splittable random generator.
//
// Every draw is a pure function of (key, counter); substreams are derived by
// hashing a label into the key, so independent parts of a program can own
// their own streams without coordinating counters. Reproducibility is exact
// across platforms: only integer arithmetic and IEEE doubles are involved.
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "credlab/common.hpp"

namespace credlab {

namespace detail {
// SplitMix64 finalizer; full-avalanche mix of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(detail::mix64(seed ^ 0x243f6a8885a308d3ull)) {}

    // Independent stream identified by a label (index or name).
    Rng split(std::uint64_t label) const {
        Rng r(0);
        r.key_ = detail::mix64(key_ ^ detail::mix64(label + 0x9e3779b97f4a7c15ull));
        r.counter_ = 0;
        return r;
    }
    Rng split(std::string_view label) const { return split(fnv1a64(label)); }

    std::uint64_t next_u64() { return detail::mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Exp(1); strictly positive and finite.
    double exponential() { return -std::log1p(-uniform()); }

    // Index draw by inverse CDF; tolerates rows that sum to slightly < 1 by
    // assigning the tail to the last positive entry.
    int categorical(const std::vector<double>& probs) {
        const double u = uniform();
        double cum = 0.0;
        int last_pos = -1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] > 0.0) last_pos = static_cast<int>(i);
            cum += probs[i];
            if (u < cum) return static_cast<int>(i);
        }
        if (last_pos < 0) throw Error("categorical: all-zero weight vector");
        return last_pos;
    }

    // Symmetric Dirichlet(1) via normalized exponentials.
    std::vector<double> dirichlet(int n) {
        std::vector<double> v(n);
        double total = 0.0;
        for (auto& x : v) {
            x = exponential();
            total += x;
        }
        for (auto& x : v) x /= total;
        return v;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace credlab
