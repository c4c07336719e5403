#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

// Deterministic, platform-independent hashing primitives. Every digest the
// toolkit writes to disk is derived from these, so the exact constants and
// mixing order are part of the output format.

namespace forge {

inline constexpr uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t state = kFnvOffsetBasis) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        state ^= p[i];
        state *= kFnvPrime;
    }
    return state;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t state = kFnvOffsetBasis) {
    return fnv1a64(s.data(), s.size(), state);
}

// Finalizer from the splitmix64 generator; full-avalanche 64-bit mixer.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Keyed hash family for MinHash permutations: member i of the family seeded
// by `seed` maps value v to splitmix64(v ^ key_i) with
// key_i = splitmix64(splitmix64(seed) ^ i * 0x9e3779b97f4a7c15).
inline uint64_t keyed_hash(uint64_t value, uint64_t seed, uint64_t index) {
    uint64_t key = splitmix64(splitmix64(seed) ^ (index * 0x9e3779b97f4a7c15ULL));
    return splitmix64(value ^ key);
}

// 128-bit content digest (two FNV-1a passes with distinct offset bases).
// Used where byte-exact identity is decided by digest equality.
struct Digest128 {
    uint64_t hi = 0;
    uint64_t lo = 0;

    bool operator==(const Digest128&) const = default;
    bool operator<(const Digest128& o) const {
        return hi != o.hi ? hi < o.hi : lo < o.lo;
    }
};

inline Digest128 digest128(std::string_view bytes) {
    Digest128 d;
    d.hi = fnv1a64(bytes, kFnvOffsetBasis);
    d.lo = fnv1a64(bytes, splitmix64(kFnvOffsetBasis));
    return d;
}

inline std::string digest128_hex(const Digest128& d) {
    static const char* hexdig = "0123456789abcdef";
    std::string out(32, '0');
    uint64_t parts[2] = {d.hi, d.lo};
    for (int w = 0; w < 2; ++w) {
        for (int i = 0; i < 16; ++i) {
            out[w * 16 + i] = hexdig[(parts[w] >> (60 - 4 * i)) & 0xf];
        }
    }
    return out;
}

struct Digest128Hash {
    size_t operator()(const Digest128& d) const noexcept {
        return static_cast<size_t>(d.hi ^ (d.lo * kFnvPrime));
    }
};

// Stage seeds are derived from the global seed and the stage name so that
// reordering stages in a config cannot silently couple their randomness.
inline uint64_t derive_seed(uint64_t global_seed, std::string_view label) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(global_seed >> (8 * i));
    uint64_t h = fnv1a64(buf, 8);
    h = fnv1a64(label, h);
    return splitmix64(h);
}

} // namespace forge
