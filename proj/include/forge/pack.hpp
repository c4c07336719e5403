#pragma once

// Token counting, fixed-tier sequence packing with cross-sample attention
// masks, and three-phase curriculum ordering.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Token counting
// ---------------------------------------------------------------------------

// Byte-proxy divisor used when no trained tokenizer is plugged in.
inline constexpr size_t kBytesPerTokenProxy = 4;

using TokenCounter = std::function<size_t(std::string_view)>;

// Default proxy: ceil(UTF-8 byte count / 4).
inline size_t count_tokens(std::string_view text) {
    return (text.size() + kBytesPerTokenProxy - 1) / kBytesPerTokenProxy;
}

// With an external counter the result is that counter's output verbatim.
inline size_t count_tokens(std::string_view text, const TokenCounter& counter) {
    return counter ? counter(text) : count_tokens(text);
}

// ---------------------------------------------------------------------------
// Samples, tiers, phases
// ---------------------------------------------------------------------------

enum class SampleDomain { fim_file, fim_repo, codeflow, generic_text };

inline constexpr std::string_view domain_name(SampleDomain domain) {
    switch (domain) {
        case SampleDomain::fim_file: return "fim_file";
        case SampleDomain::fim_repo: return "fim_repo";
        case SampleDomain::codeflow: return "codeflow";
        case SampleDomain::generic_text: return "generic_text";
    }
    return "unknown";
}

inline SampleDomain domain_from_name(std::string_view name) {
    if (name == "fim_file") return SampleDomain::fim_file;
    if (name == "fim_repo") return SampleDomain::fim_repo;
    if (name == "codeflow") return SampleDomain::codeflow;
    if (name == "generic_text") return SampleDomain::generic_text;
    raise(ErrorCode::bad_format, "unknown sample domain '" + std::string(name) + "'");
}

struct TokenizedSample {
    std::string sample_id;
    size_t length = 0;  // token count, >= 1
    SampleDomain domain = SampleDomain::generic_text;
    int phase = 0;  // in {1,2,3}, assigned before packing
};

enum class ContextTier { ctx_32k, ctx_128k };

inline constexpr size_t tier_capacity(ContextTier tier) {
    return tier == ContextTier::ctx_32k ? size_t{32768} : size_t{131072};
}

inline constexpr std::string_view tier_name(ContextTier tier) {
    return tier == ContextTier::ctx_32k ? "32k" : "128k";
}

inline ContextTier tier_from_name(std::string_view name) {
    if (name == "32k") return ContextTier::ctx_32k;
    if (name == "128k") return ContextTier::ctx_128k;
    raise(ErrorCode::invalid_config, "unknown context tier '" + std::string(name) + "'");
}

// Curriculum mapping from (domain, length) to phase. Short codeflow triplets
// count as basic material; the largest ones are the hardest and train last.
struct PhaseRules {
    int fim_file_phase = 1;
    int generic_text_phase = 1;
    int fim_repo_phase = 2;
    size_t codeflow_short_max = 4096;  // lengths <= this are phase codeflow_short_phase
    int codeflow_short_phase = 1;
    int codeflow_long_phase = 3;
};

inline int assign_phase(SampleDomain domain, size_t length, const PhaseRules& rules = {}) {
    int phase = 0;
    switch (domain) {
        case SampleDomain::fim_file: phase = rules.fim_file_phase; break;
        case SampleDomain::generic_text: phase = rules.generic_text_phase; break;
        case SampleDomain::fim_repo: phase = rules.fim_repo_phase; break;
        case SampleDomain::codeflow:
            phase = length <= rules.codeflow_short_max ? rules.codeflow_short_phase
                                                       : rules.codeflow_long_phase;
            break;
    }
    if (phase < 1 || phase > 3) {
        raise(ErrorCode::unmapped_sample,
              std::string("domain ") + std::string(domain_name(domain)) +
                  " maps to phase outside {1,2,3}");
    }
    return phase;
}

inline TokenizedSample make_tokenized_sample(std::string sample_id, std::string_view text,
                                             SampleDomain domain, const PhaseRules& rules = {},
                                             const TokenCounter& counter = {}) {
    TokenizedSample sample;
    sample.sample_id = std::move(sample_id);
    sample.length = count_tokens(text, counter);
    if (sample.length == 0) {
        raise(ErrorCode::invalid_config, "sample '" + sample.sample_id + "' has zero tokens");
    }
    sample.domain = domain;
    sample.phase = assign_phase(domain, sample.length, rules);
    return sample;
}

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

struct Segment {
    std::string sample_id;
    size_t start_token = 0;  // offset inside the packed sequence
    size_t length = 0;

    bool operator==(const Segment&) const = default;
};

struct PackedSequence {
    size_t capacity = 0;
    int phase = 0;
    std::vector<Segment> segments;  // contiguous from 0, in placement order
    double fill = 0.0;              // occupied / capacity

    size_t occupied() const {
        size_t total = 0;
        for (const Segment& seg : segments) total += seg.length;
        return total;
    }
};

enum class OversizePolicy { reject, error };

struct PackPolicy {
    OversizePolicy oversize = OversizePolicy::reject;
    // When set, samples at least this long get a dedicated sequence instead of
    // being co-packed with shorter ones. Unset allows full mixing.
    std::optional<size_t> isolate_min_length;
};

struct PackResult {
    std::vector<PackedSequence> sequences;  // phase ascending, bins in creation order
    std::vector<std::string> rejected;      // oversize sample ids, input order
    double aggregate_fill = 0.0;            // total occupied / (sequences * capacity)
};

namespace pack_detail {

inline void place(PackedSequence& bin, const TokenizedSample& sample) {
    size_t start = bin.occupied();
    bin.segments.push_back({sample.sample_id, start, sample.length});
}

}  // namespace pack_detail

// First-fit-decreasing within each curriculum phase; no sample crosses a
// sequence boundary. Ties in length break by sample_id so the result does not
// depend on input permutation.
inline PackResult pack_capacity(const std::vector<TokenizedSample>& samples, size_t capacity,
                                const PackPolicy& policy = {}) {
    if (capacity == 0) {
        raise(ErrorCode::invalid_config, "pack capacity must be >= 1");
    }
    std::unordered_set<std::string_view> ids;
    std::map<int, std::vector<const TokenizedSample*>> by_phase;
    PackResult result;
    for (const TokenizedSample& sample : samples) {
        if (!ids.insert(sample.sample_id).second) {
            raise(ErrorCode::invalid_config, "duplicate sample_id '" + sample.sample_id + "'");
        }
        if (sample.length == 0) {
            raise(ErrorCode::invalid_config, "sample '" + sample.sample_id + "' has zero tokens");
        }
        if (sample.phase < 1 || sample.phase > 3) {
            raise(ErrorCode::unmapped_sample,
                  "sample '" + sample.sample_id + "' has no curriculum phase");
        }
        if (sample.length > capacity) {
            if (policy.oversize == OversizePolicy::error) {
                raise(ErrorCode::oversize_sample, "sample '" + sample.sample_id + "' has " +
                                                      std::to_string(sample.length) +
                                                      " tokens, capacity " +
                                                      std::to_string(capacity));
            }
            result.rejected.push_back(sample.sample_id);
            continue;
        }
        by_phase[sample.phase].push_back(&sample);
    }

    size_t total_occupied = 0;
    for (auto& [phase, bucket] : by_phase) {
        std::sort(bucket.begin(), bucket.end(),
                  [](const TokenizedSample* a, const TokenizedSample* b) {
                      if (a->length != b->length) return a->length > b->length;
                      return a->sample_id < b->sample_id;
                  });
        std::vector<PackedSequence> bins;
        for (const TokenizedSample* sample : bucket) {
            if (policy.isolate_min_length && sample->length >= *policy.isolate_min_length) {
                PackedSequence bin;
                bin.capacity = capacity;
                bin.phase = phase;
                pack_detail::place(bin, *sample);
                bins.push_back(std::move(bin));
                continue;
            }
            bool placed = false;
            for (PackedSequence& bin : bins) {
                if (bin.segments.size() == 1 && policy.isolate_min_length &&
                    bin.segments[0].length >= *policy.isolate_min_length) {
                    continue;  // dedicated bin, not open for co-packing
                }
                if (bin.occupied() + sample->length <= capacity) {
                    pack_detail::place(bin, *sample);
                    placed = true;
                    break;
                }
            }
            if (!placed) {
                PackedSequence bin;
                bin.capacity = capacity;
                bin.phase = phase;
                pack_detail::place(bin, *sample);
                bins.push_back(std::move(bin));
            }
        }
        for (PackedSequence& bin : bins) {
            size_t occupied = bin.occupied();
            total_occupied += occupied;
            bin.fill = static_cast<double>(occupied) / static_cast<double>(capacity);
            result.sequences.push_back(std::move(bin));
        }
    }
    if (!result.sequences.empty()) {
        result.aggregate_fill =
            static_cast<double>(total_occupied) /
            static_cast<double>(result.sequences.size() * capacity);
    }
    return result;
}

inline PackResult pack(const std::vector<TokenizedSample>& samples, ContextTier tier,
                       const PackPolicy& policy = {}) {
    return pack_capacity(samples, tier_capacity(tier), policy);
}

// ---------------------------------------------------------------------------
// Cross-sample attention masks
// ---------------------------------------------------------------------------

struct MaskDescriptor {
    std::vector<size_t> runs;  // segment lengths in order; sum == occupied tokens

    size_t total() const {
        size_t sum = 0;
        for (size_t run : runs) sum += run;
        return sum;
    }
};

inline MaskDescriptor emit_mask(const PackedSequence& seq) {
    MaskDescriptor mask;
    mask.runs.reserve(seq.segments.size());
    for (const Segment& seg : seq.segments) mask.runs.push_back(seg.length);
    return mask;
}

// Dense row-major expansion: entry [i*n + j] is 1 iff position i may attend to
// position j, i.e. j <= i and both positions fall in the same run.
inline std::vector<uint8_t> expand_mask(const MaskDescriptor& mask) {
    const size_t n = mask.total();
    std::vector<size_t> block_of(n);
    size_t pos = 0;
    for (size_t b = 0; b < mask.runs.size(); ++b) {
        for (size_t k = 0; k < mask.runs[b]; ++k) block_of[pos++] = b;
    }
    std::vector<uint8_t> out(n * n, 0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            if (block_of[i] == block_of[j]) out[i * n + j] = 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Curriculum ordering
// ---------------------------------------------------------------------------

namespace pack_detail {

// Phase-1 items first, then 2, then 3; a seeded shuffle inside each phase.
inline std::vector<size_t> curriculum_permutation(const std::vector<int>& phases, uint64_t seed) {
    std::map<int, std::vector<size_t>> buckets;
    for (size_t i = 0; i < phases.size(); ++i) {
        if (phases[i] < 1 || phases[i] > 3) {
            raise(ErrorCode::unmapped_sample,
                  "item " + std::to_string(i) + " has no curriculum phase");
        }
        buckets[phases[i]].push_back(i);
    }
    std::vector<size_t> order;
    order.reserve(phases.size());
    for (auto& [phase, bucket] : buckets) {
        Rng rng(derive_seed(seed, "curriculum/phase" + std::to_string(phase)));
        rng.shuffle(bucket);
        order.insert(order.end(), bucket.begin(), bucket.end());
    }
    return order;
}

template <typename T, typename PhaseFn>
std::vector<T> order_by_curriculum(const std::vector<T>& items, uint64_t seed, PhaseFn phase_of) {
    std::vector<int> phases;
    phases.reserve(items.size());
    for (const T& item : items) phases.push_back(phase_of(item));
    std::vector<T> out;
    out.reserve(items.size());
    for (size_t i : curriculum_permutation(phases, seed)) out.push_back(items[i]);
    return out;
}

}  // namespace pack_detail

inline std::vector<TokenizedSample> curriculum_order(const std::vector<TokenizedSample>& samples,
                                                     uint64_t seed) {
    return pack_detail::order_by_curriculum(samples, seed,
                                            [](const TokenizedSample& s) { return s.phase; });
}

inline std::vector<PackedSequence> curriculum_order(const std::vector<PackedSequence>& sequences,
                                                    uint64_t seed) {
    return pack_detail::order_by_curriculum(sequences, seed,
                                            [](const PackedSequence& s) { return s.phase; });
}

}  // namespace forge
