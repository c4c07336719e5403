#pragma once

// Constructed shingle-set pairs with exactly known Jaccard similarity, used
// to check the MinHash estimator and LSH detection against a set-arithmetic
// oracle that never touches the MinHash code paths.

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>

#include "forge/dedup.hpp"
#include "forge/hash.hpp"

namespace testutil {

struct JaccardPair {
    forge::ShingleSet a;
    forge::ShingleSet b;
    double true_jaccard = 0.0;
};

// Builds |shared| common shingles plus disjoint tails. splitmix64 is a
// bijection, so distinct counter inputs yield distinct shingle values and the
// set sizes are exact. `tag` shifts the counter space so different pairs use
// disjoint shingle universes.
inline JaccardPair make_jaccard_pair(std::size_t shared, std::size_t a_only, std::size_t b_only,
                                     std::uint64_t tag) {
    JaccardPair pair;
    pair.a.doc_id = "a";
    pair.b.doc_id = "b";
    const std::uint64_t base = tag * 1000000ULL;
    for (std::size_t i = 0; i < shared; ++i) {
        std::uint64_t v = forge::splitmix64(base + i);
        pair.a.shingles.insert(v);
        pair.b.shingles.insert(v);
    }
    for (std::size_t i = 0; i < a_only; ++i) {
        pair.a.shingles.insert(forge::splitmix64(base + 100000ULL + i));
    }
    for (std::size_t i = 0; i < b_only; ++i) {
        pair.b.shingles.insert(forge::splitmix64(base + 200000ULL + i));
    }
    pair.a.token_count = pair.a.shingles.size();
    pair.b.token_count = pair.b.shingles.size();

    // Independent oracle: plain set arithmetic over the constructed sets.
    std::set<std::uint64_t> inter;
    std::set_intersection(pair.a.shingles.begin(), pair.a.shingles.end(), pair.b.shingles.begin(),
                          pair.b.shingles.end(), std::inserter(inter, inter.begin()));
    std::set<std::uint64_t> uni;
    std::set_union(pair.a.shingles.begin(), pair.a.shingles.end(), pair.b.shingles.begin(),
                   pair.b.shingles.end(), std::inserter(uni, uni.begin()));
    pair.true_jaccard =
        uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    return pair;
}

// Mean MinHash estimate over `seeds` independent hash families.
inline double mean_estimate(const JaccardPair& pair, std::size_t k, std::size_t seeds) {
    double sum = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        auto sig_a = forge::minhash(pair.a, k, s + 1);
        auto sig_b = forge::minhash(pair.b, k, s + 1);
        sum += forge::estimate_jaccard(sig_a, sig_b);
    }
    return sum / static_cast<double>(seeds);
}

// One LSH detection trial: both docs signed with one seed, the first inserted
// into a banding index, the second probed; detected iff the pair band-collides
// and the signature estimate clears the threshold.
inline bool lsh_detects(const JaccardPair& pair, const forge::DedupConfig& config,
                        std::uint64_t seed) {
    auto sig_a = forge::minhash(pair.a, config.k, seed);
    auto sig_b = forge::minhash(pair.b, config.k, seed);
    forge::LshIndex index;
    index.bands = config.bands;
    index.rows = config.rows;
    index.insert(sig_a);
    for (const std::string& cand : index.candidates(sig_b)) {
        if (cand == sig_a.doc_id &&
            forge::estimate_jaccard(sig_a, sig_b) >= config.threshold) {
            return true;
        }
    }
    return false;
}

}  // namespace testutil
