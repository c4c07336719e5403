#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "forge/hash.hpp"

namespace forge {

// Seeded generator with fully pinned sampling routines. The engine
// (std::mt19937_64) is specified by the standard; the bounded draws below
// avoid std::uniform_int_distribution, whose output is implementation
// defined and would break cross-toolchain reproducibility.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    // Unbiased draw in [0, n) by rejection sampling.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t threshold = (0 - n) % n; // 2^64 mod n
        for (;;) {
            uint64_t v = next_u64();
            if (v >= threshold) return v % n;
        }
    }

    size_t index(size_t n) { return static_cast<size_t>(below(n)); }

    // Uniform double in [0, 1) with 53 random bits.
    double unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child generator for a named sampling scope (one per
    // sample, one per stage). Stable under reordering of sibling scopes.
    Rng derive(std::string_view label) const {
        return Rng(derive_seed(seed_, label));
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace forge
