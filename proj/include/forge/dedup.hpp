#pragma once

// Hierarchical deduplication (exact digest pass, then fuzzy MinHash-LSH) and
// n-gram benchmark decontamination over (doc_id, text) corpora.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "forge/error.hpp"
#include "forge/hash.hpp"

namespace forge {

struct Document {
    std::string doc_id;
    std::string text;
};

// ---------------------------------------------------------------------------
// Canonical tokenization
// ---------------------------------------------------------------------------

namespace dedup_detail {

// Only ASCII letters and digits are token characters; every other byte
// (including UTF-8 continuation bytes) acts as a separator. This keeps the
// normalization byte-deterministic and locale-independent.
inline bool is_token_char(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Byte spans [begin, end) of maximal alphanumeric runs, in text order.
inline std::vector<std::pair<size_t, size_t>> token_spans(std::string_view text) {
    std::vector<std::pair<size_t, size_t>> spans;
    size_t i = 0;
    while (i < text.size()) {
        if (!is_token_char(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        size_t begin = i;
        while (i < text.size() && is_token_char(static_cast<unsigned char>(text[i]))) ++i;
        spans.emplace_back(begin, i);
    }
    return spans;
}

inline std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

}  // namespace dedup_detail

// Lowercases and splits on non-alphanumeric runs, dropping empty tokens.
inline std::vector<std::string> tokenize_for_dedup(std::string_view text) {
    std::vector<std::string> tokens;
    for (const auto& [begin, end] : dedup_detail::token_spans(text)) {
        tokens.push_back(dedup_detail::lower_ascii(text.substr(begin, end - begin)));
    }
    return tokens;
}

// ---------------------------------------------------------------------------
// Shingles and MinHash signatures
// ---------------------------------------------------------------------------

inline constexpr size_t kDefaultShingleWidth = 5;
inline constexpr size_t kDefaultMinhashK = 128;
inline constexpr size_t kDefaultLshBands = 16;
inline constexpr size_t kDefaultLshRows = 8;
inline constexpr double kDefaultDedupThreshold = 0.8;

struct ShingleSet {
    std::string doc_id;
    std::set<uint64_t> shingles;
    size_t token_count = 0;
};

namespace dedup_detail {

// Hash of tokens[first, first+count) joined with a unit separator, so token
// boundaries cannot be forged by concatenation.
inline uint64_t hash_window(const std::vector<std::string>& tokens, size_t first, size_t count) {
    uint64_t state = kFnvOffsetBasis;
    for (size_t i = first; i < first + count; ++i) {
        if (i > first) {
            const char sep = '\x1f';
            state = fnv1a64(&sep, 1, state);
        }
        state = fnv1a64(tokens[i], state);
    }
    return state;
}

}  // namespace dedup_detail

// Hashed w-token windows. Documents with 1..w-1 tokens contribute a single
// whole-document shingle; documents with zero tokens produce an empty set and
// are eligible for exact dedup only.
inline ShingleSet make_shingle_set(std::string doc_id, std::string_view text,
                                   size_t width = kDefaultShingleWidth) {
    if (width == 0) {
        raise(ErrorCode::invalid_config, "shingle width must be >= 1");
    }
    ShingleSet out;
    out.doc_id = std::move(doc_id);
    std::vector<std::string> tokens = tokenize_for_dedup(text);
    out.token_count = tokens.size();
    if (tokens.empty()) {
        return out;
    }
    if (tokens.size() < width) {
        out.shingles.insert(dedup_detail::hash_window(tokens, 0, tokens.size()));
        return out;
    }
    for (size_t i = 0; i + width <= tokens.size(); ++i) {
        out.shingles.insert(dedup_detail::hash_window(tokens, i, width));
    }
    return out;
}

struct MinHashSignature {
    std::string doc_id;
    std::vector<uint64_t> values;
    size_t k = 0;
    uint64_t seed = 0;
};

// values[i] = min over shingles of the i-th keyed hash. Deterministic given
// (seed, shingle set); independent of doc_id.
inline MinHashSignature minhash(const ShingleSet& set, size_t k = kDefaultMinhashK,
                                uint64_t seed = 0) {
    if (k == 0) {
        raise(ErrorCode::invalid_config, "minhash k must be >= 1");
    }
    if (set.shingles.empty()) {
        raise(ErrorCode::empty_shingle_set, "document '" + set.doc_id + "' has no shingles");
    }
    MinHashSignature sig;
    sig.doc_id = set.doc_id;
    sig.k = k;
    sig.seed = seed;
    sig.values.assign(k, ~0ULL);
    for (uint64_t shingle : set.shingles) {
        for (size_t i = 0; i < k; ++i) {
            uint64_t h = keyed_hash(shingle, seed, i);
            if (h < sig.values[i]) sig.values[i] = h;
        }
    }
    return sig;
}

// Fraction of agreeing slots; unbiased estimator of the Jaccard similarity of
// the underlying shingle sets.
inline double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
    if (a.k != b.k || a.seed != b.seed) {
        raise(ErrorCode::signature_mismatch, "signatures use different k or seed");
    }
    if (a.values.size() != a.k || b.values.size() != b.k || a.k == 0) {
        raise(ErrorCode::signature_mismatch, "signature length does not match k");
    }
    size_t agree = 0;
    for (size_t i = 0; i < a.k; ++i) {
        if (a.values[i] == b.values[i]) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(a.k);
}

// ---------------------------------------------------------------------------
// LSH banding index
// ---------------------------------------------------------------------------

namespace dedup_detail {

inline uint64_t band_hash(const std::vector<uint64_t>& values, size_t band, size_t rows) {
    uint64_t state = kFnvOffsetBasis;
    for (size_t row = 0; row < rows; ++row) {
        uint64_t v = values[band * rows + row];
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(v >> (8 * b));
        state = fnv1a64(bytes, sizeof bytes, state);
    }
    return state;
}

}  // namespace dedup_detail

struct LshIndex {
    size_t bands = kDefaultLshBands;
    size_t rows = kDefaultLshRows;
    // (band index, band hash) -> doc ids in insertion order.
    std::map<std::pair<size_t, uint64_t>, std::vector<std::string>> buckets;

    void insert(const MinHashSignature& sig) {
        if (sig.values.size() != bands * rows) {
            raise(ErrorCode::signature_mismatch, "signature length does not match bands*rows");
        }
        for (size_t band = 0; band < bands; ++band) {
            buckets[{band, dedup_detail::band_hash(sig.values, band, rows)}].push_back(sig.doc_id);
        }
    }

    // Previously inserted doc ids sharing at least one bucket, deduplicated in
    // first-seen order.
    std::vector<std::string> candidates(const MinHashSignature& sig) const {
        if (sig.values.size() != bands * rows) {
            raise(ErrorCode::signature_mismatch, "signature length does not match bands*rows");
        }
        std::vector<std::string> out;
        std::unordered_set<std::string_view> seen;
        for (size_t band = 0; band < bands; ++band) {
            auto it = buckets.find({band, dedup_detail::band_hash(sig.values, band, rows)});
            if (it == buckets.end()) continue;
            for (const std::string& id : it->second) {
                if (seen.insert(id).second) out.push_back(id);
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Exact dedup
// ---------------------------------------------------------------------------

namespace dedup_detail {

inline void require_unique_ids(const std::vector<Document>& docs) {
    std::unordered_set<std::string_view> ids;
    for (const Document& doc : docs) {
        if (!ids.insert(doc.doc_id).second) {
            raise(ErrorCode::invalid_config, "duplicate doc_id '" + doc.doc_id + "'");
        }
    }
}

}  // namespace dedup_detail

struct ExactDedupResult {
    std::vector<Document> survivors;                     // stable input order
    std::vector<std::pair<std::string, std::string>> drops;  // dropped id -> kept id
};

inline ExactDedupResult exact_dedup(const std::vector<Document>& docs) {
    dedup_detail::require_unique_ids(docs);
    ExactDedupResult out;
    std::unordered_map<Digest128, std::string, Digest128Hash> first_by_digest;
    for (const Document& doc : docs) {
        auto [it, fresh] = first_by_digest.emplace(digest128(doc.text), doc.doc_id);
        if (fresh) {
            out.survivors.push_back(doc);
        } else {
            out.drops.emplace_back(doc.doc_id, it->second);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fuzzy dedup (MinHash-LSH with union-find clustering)
// ---------------------------------------------------------------------------

struct DedupConfig {
    size_t k = kDefaultMinhashK;
    size_t bands = kDefaultLshBands;
    size_t rows = kDefaultLshRows;
    double threshold = kDefaultDedupThreshold;
    uint64_t seed = 0;
    size_t shingle_width = kDefaultShingleWidth;
};

struct NearDuplicateCluster {
    std::string survivor;              // lexicographically smallest member
    std::vector<std::string> members;  // sorted ascending, includes survivor
};

struct LshDedupResult {
    std::vector<Document> survivors;                     // stable input order
    std::vector<NearDuplicateCluster> clusters;          // size >= 2, sorted by survivor
    std::vector<std::pair<std::string, std::string>> drops;  // dropped id -> survivor id
};

namespace dedup_detail {

struct UnionFind {
    std::vector<size_t> parent;

    explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), size_t{0}); }

    size_t find(size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    void unite(size_t a, size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[b] = a;
    }
};

inline void validate_dedup_config(const DedupConfig& config) {
    if (config.k == 0 || config.bands == 0 || config.rows == 0 ||
        config.bands * config.rows != config.k) {
        raise(ErrorCode::invalid_config, "bands*rows must equal k");
    }
    if (!(config.threshold >= 0.0 && config.threshold <= 1.0)) {
        raise(ErrorCode::invalid_config, "threshold must be in [0, 1]");
    }
    if (config.shingle_width == 0) {
        raise(ErrorCode::invalid_config, "shingle width must be >= 1");
    }
}

}  // namespace dedup_detail

// Candidate pairs come from band-bucket collisions and are verified with
// estimate_jaccard before union-find merging. Insertions happen in doc_id
// order so clustering does not depend on input permutation. Documents with
// zero tokens cannot be fingerprinted and always survive this pass.
inline LshDedupResult lsh_dedup(const std::vector<Document>& docs,
                                const DedupConfig& config = {}) {
    dedup_detail::validate_dedup_config(config);
    dedup_detail::require_unique_ids(docs);

    const size_t n = docs.size();
    std::vector<ShingleSet> shingles;
    shingles.reserve(n);
    std::unordered_map<std::string_view, size_t> index_of;
    for (size_t i = 0; i < n; ++i) {
        shingles.push_back(make_shingle_set(docs[i].doc_id, docs[i].text, config.shingle_width));
        index_of.emplace(docs[i].doc_id, i);
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return docs[a].doc_id < docs[b].doc_id; });

    std::vector<std::optional<MinHashSignature>> sigs(n);
    LshIndex index;
    index.bands = config.bands;
    index.rows = config.rows;
    dedup_detail::UnionFind uf(n);

    for (size_t i : order) {
        if (shingles[i].shingles.empty()) continue;
        sigs[i] = minhash(shingles[i], config.k, config.seed);
        for (const std::string& cand : index.candidates(*sigs[i])) {
            size_t j = index_of.at(cand);
            if (uf.find(i) == uf.find(j)) continue;
            if (estimate_jaccard(*sigs[i], *sigs[j]) >= config.threshold) {
                uf.unite(i, j);
            }
        }
        index.insert(*sigs[i]);
    }

    std::map<size_t, std::vector<size_t>> groups;
    for (size_t i = 0; i < n; ++i) {
        groups[uf.find(i)].push_back(i);
    }

    LshDedupResult out;
    std::vector<char> is_survivor(n, 1);
    for (const auto& [root, members] : groups) {
        if (members.size() < 2) continue;
        NearDuplicateCluster cluster;
        for (size_t m : members) cluster.members.push_back(docs[m].doc_id);
        std::sort(cluster.members.begin(), cluster.members.end());
        cluster.survivor = cluster.members.front();
        for (size_t m : members) {
            if (docs[m].doc_id != cluster.survivor) is_survivor[m] = 0;
        }
        out.clusters.push_back(std::move(cluster));
    }
    std::sort(out.clusters.begin(), out.clusters.end(),
              [](const NearDuplicateCluster& a, const NearDuplicateCluster& b) {
                  return a.survivor < b.survivor;
              });
    for (const NearDuplicateCluster& cluster : out.clusters) {
        for (const std::string& member : cluster.members) {
            if (member != cluster.survivor) out.drops.emplace_back(member, cluster.survivor);
        }
    }
    for (size_t i = 0; i < n; ++i) {
        if (is_survivor[i]) out.survivors.push_back(docs[i]);
    }
    return out;
}

struct DedupResult {
    std::vector<Document> survivors;
    std::vector<std::pair<std::string, std::string>> exact_drops;
    std::vector<NearDuplicateCluster> clusters;
    std::vector<std::pair<std::string, std::string>> fuzzy_drops;
};

// Exact pass first (byte-identical copies collapse to the earliest input
// occurrence), then the fuzzy pass over the exact survivors.
inline DedupResult dedup_corpus(const std::vector<Document>& docs,
                                const DedupConfig& config = {}) {
    ExactDedupResult exact = exact_dedup(docs);
    LshDedupResult fuzzy = lsh_dedup(exact.survivors, config);
    DedupResult out;
    out.survivors = std::move(fuzzy.survivors);
    out.exact_drops = std::move(exact.drops);
    out.clusters = std::move(fuzzy.clusters);
    out.fuzzy_drops = std::move(fuzzy.drops);
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark decontamination
// ---------------------------------------------------------------------------

inline constexpr size_t kDefaultNgramLen = 10;
inline constexpr size_t kDefaultHitMin = 1;

struct ContaminationRule {
    std::string benchmark_name;
    size_t ngram_len = kDefaultNgramLen;
    std::set<uint64_t> ngram_set;
};

// Benchmark files carry one item per line; n-gram windows never straddle
// items. Items shorter than n tokens contribute a single whole-item gram.
inline ContaminationRule compile_rule(std::string benchmark_name, std::string_view text,
                                      size_t ngram_len = kDefaultNgramLen) {
    if (ngram_len == 0) {
        raise(ErrorCode::invalid_config, "ngram length must be >= 1");
    }
    ContaminationRule rule;
    rule.benchmark_name = std::move(benchmark_name);
    rule.ngram_len = ngram_len;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        std::string_view line =
            nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        ShingleSet grams = make_shingle_set("", line, ngram_len);
        rule.ngram_set.insert(grams.shingles.begin(), grams.shingles.end());
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (rule.ngram_set.empty()) {
        raise(ErrorCode::invalid_config,
              "benchmark '" + rule.benchmark_name + "' yields no n-grams");
    }
    return rule;
}

struct ContaminationFlag {
    std::string doc_id;
    std::string benchmark_name;
    size_t matched_grams = 0;  // distinct shared n-grams
};

struct DecontamResult {
    std::vector<Document> clean;    // stable input order
    std::vector<Document> flagged;  // stable input order
    std::vector<ContaminationFlag> flags;  // doc input order, then rule order
};

// A document is flagged iff it shares >= hit_min distinct n-grams with any
// rule's set; one flag per (document, matching rule).
inline DecontamResult decontaminate(const std::vector<Document>& docs,
                                    const std::vector<ContaminationRule>& rules,
                                    size_t hit_min = kDefaultHitMin) {
    if (hit_min == 0) {
        raise(ErrorCode::invalid_config, "hit_min must be >= 1");
    }
    for (const ContaminationRule& rule : rules) {
        if (rule.ngram_len == 0 || rule.ngram_set.empty()) {
            raise(ErrorCode::invalid_config,
                  "rule '" + rule.benchmark_name + "' is not a compiled rule");
        }
    }
    DecontamResult out;
    for (const Document& doc : docs) {
        std::map<size_t, std::set<uint64_t>> grams_by_len;
        bool hit = false;
        for (const ContaminationRule& rule : rules) {
            auto it = grams_by_len.find(rule.ngram_len);
            if (it == grams_by_len.end()) {
                it = grams_by_len
                         .emplace(rule.ngram_len,
                                  make_shingle_set("", doc.text, rule.ngram_len).shingles)
                         .first;
            }
            size_t matched = 0;
            for (uint64_t gram : it->second) {
                if (rule.ngram_set.count(gram)) ++matched;
            }
            if (matched >= hit_min) {
                out.flags.push_back({doc.doc_id, rule.benchmark_name, matched});
                hit = true;
            }
        }
        (hit ? out.flagged : out.clean).push_back(doc);
    }
    return out;
}

// Span-excision alternative to dropping whole documents: removes the byte
// range covered by every matching n-gram window and returns the remainder.
inline std::string excise_contamination(std::string_view text,
                                        const std::vector<ContaminationRule>& rules) {
    auto spans = dedup_detail::token_spans(text);
    std::vector<std::string> tokens;
    tokens.reserve(spans.size());
    for (const auto& [begin, end] : spans) {
        tokens.push_back(dedup_detail::lower_ascii(text.substr(begin, end - begin)));
    }
    std::vector<std::pair<size_t, size_t>> cuts;
    for (const ContaminationRule& rule : rules) {
        const size_t n = rule.ngram_len;
        if (tokens.empty() || n == 0) continue;
        if (tokens.size() < n) {
            if (rule.ngram_set.count(dedup_detail::hash_window(tokens, 0, tokens.size()))) {
                cuts.emplace_back(spans.front().first, spans.back().second);
            }
            continue;
        }
        for (size_t i = 0; i + n <= tokens.size(); ++i) {
            if (rule.ngram_set.count(dedup_detail::hash_window(tokens, i, n))) {
                cuts.emplace_back(spans[i].first, spans[i + n - 1].second);
            }
        }
    }
    if (cuts.empty()) return std::string(text);
    std::sort(cuts.begin(), cuts.end());
    std::string out;
    size_t pos = 0;
    for (const auto& [begin, end] : cuts) {
        if (begin > pos) out.append(text.substr(pos, begin - pos));
        pos = std::max(pos, end);
    }
    if (pos < text.size()) out.append(text.substr(pos));
    return out;
}

}  // namespace forge
