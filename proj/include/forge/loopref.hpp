#pragma once

// Numeric reference (forward pass only) of the two-iteration gated
// dual-attention block, with deterministic-recompute fingerprint validation.
// All arithmetic is 64-bit floating point with a fixed reduction order so
// repeated runs are bit-identical.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/rng.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(size_t i, size_t j) { return data[i * cols + j]; }
    double at(size_t i, size_t j) const { return data[i * cols + j]; }

    bool operator==(const Matrix&) const = default;
};

namespace loop_detail {

inline void require_shape(bool ok, const char* what) {
    if (!ok) raise(ErrorCode::invalid_config, what);
}

}  // namespace loop_detail

// Plain triple loop, k ascending: the fixed reduction order every caller and
// the fingerprint contract rely on.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    loop_detail::require_shape(a.cols == b.rows, "matmul shape mismatch");
    Matrix out(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < a.cols; ++k) {
                acc += a.at(i, k) * b.at(k, j);
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Configuration and weights
// ---------------------------------------------------------------------------

struct LoopConfig {
    size_t d_model = 16;
    size_t n_heads = 2;
    size_t seq_len = 4;

    static constexpr int kIterations = 2;

    size_t head_dim() const { return d_model / n_heads; }

    void validate() const {
        if (d_model == 0 || n_heads == 0 || seq_len == 0 || d_model % n_heads != 0) {
            raise(ErrorCode::invalid_config,
                  "d_model must be a positive multiple of n_heads and seq_len >= 1");
        }
    }
};

struct LoopWeights {
    // Shared block projections, d_model x d_model. The same object serves both
    // iterations; there is deliberately no per-iteration copy.
    Matrix wq;
    Matrix wk;
    Matrix wv;
    Matrix wo;
    // Gate: one linear functional per head over the query vector.
    Matrix gate_w;                // n_heads x head_dim
    std::vector<double> gate_b;  // n_heads

    void validate(const LoopConfig& config) const {
        config.validate();
        auto square = [&](const Matrix& m) {
            return m.rows == config.d_model && m.cols == config.d_model;
        };
        loop_detail::require_shape(square(wq) && square(wk) && square(wv) && square(wo),
                                   "projection matrices must be d_model x d_model");
        loop_detail::require_shape(
            gate_w.rows == config.n_heads && gate_w.cols == config.head_dim() &&
                gate_b.size() == config.n_heads,
            "gate parameters must be n_heads x head_dim plus one bias per head");
        for (const Matrix* m : {&wq, &wk, &wv, &wo, &gate_w}) {
            for (double v : m->data) {
                if (!std::isfinite(v)) raise(ErrorCode::non_finite, "weights must be finite");
            }
        }
        for (double v : gate_b) {
            if (!std::isfinite(v)) raise(ErrorCode::non_finite, "weights must be finite");
        }
    }
};

struct IterationState {
    Matrix hidden;           // seq_len x d_model, shifted right by one position
    std::vector<Matrix> k1;  // per head, seq_len x head_dim, from pre-shift hidden
    std::vector<Matrix> v1;
};

// ---------------------------------------------------------------------------
// Attention primitives
// ---------------------------------------------------------------------------

// Row-major boolean mask, entry [i*key_len + j] = 1 iff query i may attend to
// key j. An empty vector means no masking.
inline std::vector<uint8_t> causal_mask(size_t n) {
    std::vector<uint8_t> mask(n * n, 0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
    }
    return mask;
}

// softmax((q . k^T) / sqrt(head_dim)) . v for one head. A fully-masked row
// yields a zero output row by convention.
inline Matrix scaled_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                               const std::vector<uint8_t>& mask = {}) {
    loop_detail::require_shape(q.cols == k.cols, "query/key width mismatch");
    loop_detail::require_shape(k.rows == v.rows, "key/value length mismatch");
    loop_detail::require_shape(mask.empty() || mask.size() == q.rows * k.rows,
                               "mask must be query_len x key_len");
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Matrix out(q.rows, v.cols);
    std::vector<double> weights(k.rows);
    for (size_t i = 0; i < q.rows; ++i) {
        double max_score = 0.0;
        bool any = false;
        for (size_t j = 0; j < k.rows; ++j) {
            if (!mask.empty() && !mask[i * k.rows + j]) continue;
            double score = 0.0;
            for (size_t c = 0; c < q.cols; ++c) score += q.at(i, c) * k.at(j, c);
            score *= scale;
            weights[j] = score;
            if (!any || score > max_score) max_score = score;
            any = true;
        }
        if (!any) continue;  // zero output row
        double sum = 0.0;
        for (size_t j = 0; j < k.rows; ++j) {
            if (!mask.empty() && !mask[i * k.rows + j]) {
                weights[j] = 0.0;
                continue;
            }
            weights[j] = std::exp(weights[j] - max_score);
            sum += weights[j];
        }
        for (size_t c = 0; c < v.cols; ++c) {
            double acc = 0.0;
            for (size_t j = 0; j < k.rows; ++j) {
                if (weights[j] != 0.0) acc += (weights[j] / sum) * v.at(j, c);
            }
            out.at(i, c) = acc;
        }
    }
    return out;
}

namespace loop_detail {

inline Matrix head_slice(const Matrix& m, size_t head, size_t head_dim) {
    Matrix out(m.rows, head_dim);
    for (size_t i = 0; i < m.rows; ++i) {
        for (size_t c = 0; c < head_dim; ++c) out.at(i, c) = m.at(i, head * head_dim + c);
    }
    return out;
}

inline void write_head(Matrix& dst, const Matrix& src, size_t head, size_t head_dim) {
    for (size_t i = 0; i < src.rows; ++i) {
        for (size_t c = 0; c < head_dim; ++c) dst.at(i, head * head_dim + c) = src.at(i, c);
    }
}

inline Matrix shift_right_one(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (size_t i = 1; i < m.rows; ++i) {
        for (size_t c = 0; c < m.cols; ++c) out.at(i, c) = m.at(i - 1, c);
    }
    return out;
}

// Multi-head attention block with Q/K/V/O projections; no feed-forward, no
// normalization.
inline Matrix attention_block(const LoopConfig& config, const Matrix& x, const LoopWeights& w,
                              bool causal) {
    Matrix q = matmul(x, w.wq);
    Matrix k = matmul(x, w.wk);
    Matrix v = matmul(x, w.wv);
    std::vector<uint8_t> mask = causal ? causal_mask(x.rows) : std::vector<uint8_t>{};
    Matrix concat(x.rows, config.d_model);
    const size_t hd = config.head_dim();
    for (size_t h = 0; h < config.n_heads; ++h) {
        Matrix out_h = scaled_attention(head_slice(q, h, hd), head_slice(k, h, hd),
                                        head_slice(v, h, hd), mask);
        write_head(concat, out_h, h, hd);
    }
    return matmul(concat, w.wo);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace loop_detail

// ---------------------------------------------------------------------------
// The two iterations
// ---------------------------------------------------------------------------

// Causal self-attention over the embeddings, then the position shift: hidden
// states move right by one position with a zero vector at position 0. The KV
// cache is projected from the pre-shift hidden states with the shared wk/wv.
inline IterationState iteration_one(const LoopConfig& config, const Matrix& embeddings,
                                    const LoopWeights& weights) {
    weights.validate(config);
    loop_detail::require_shape(
        embeddings.rows == config.seq_len && embeddings.cols == config.d_model,
        "embeddings must be seq_len x d_model");
    Matrix pre = loop_detail::attention_block(config, embeddings, weights, /*causal=*/true);
    IterationState state;
    Matrix k1 = matmul(pre, weights.wk);
    Matrix v1 = matmul(pre, weights.wv);
    const size_t hd = config.head_dim();
    for (size_t h = 0; h < config.n_heads; ++h) {
        state.k1.push_back(loop_detail::head_slice(k1, h, hd));
        state.v1.push_back(loop_detail::head_slice(v1, h, hd));
    }
    state.hidden = loop_detail::shift_right_one(pre);
    return state;
}

struct IterationTwoParts {
    Matrix global;  // seq_len x d_model, heads concatenated
    Matrix local;   // seq_len x d_model
    Matrix gates;   // seq_len x n_heads
    Matrix output;  // g * global + (1 - g) * local, no trailing projection
};

// Global attention: iteration-2 queries over the iteration-1 KV cache, no
// mask. Local attention: the same queries over iteration-2 KV, causal. The
// per-head scalar gate comes from the query vector itself.
inline IterationTwoParts iteration_two_parts(const LoopConfig& config,
                                             const IterationState& state,
                                             const LoopWeights& weights) {
    weights.validate(config);
    loop_detail::require_shape(
        state.hidden.rows == config.seq_len && state.hidden.cols == config.d_model,
        "state hidden must be seq_len x d_model");
    loop_detail::require_shape(
        state.k1.size() == config.n_heads && state.v1.size() == config.n_heads,
        "kv_cache must hold one K and one V per head");

    Matrix q2 = matmul(state.hidden, weights.wq);
    Matrix k2 = matmul(state.hidden, weights.wk);
    Matrix v2 = matmul(state.hidden, weights.wv);
    std::vector<uint8_t> mask = causal_mask(config.seq_len);
    const size_t hd = config.head_dim();

    IterationTwoParts parts;
    parts.global = Matrix(config.seq_len, config.d_model);
    parts.local = Matrix(config.seq_len, config.d_model);
    parts.gates = Matrix(config.seq_len, config.n_heads);
    parts.output = Matrix(config.seq_len, config.d_model);

    for (size_t h = 0; h < config.n_heads; ++h) {
        Matrix q2h = loop_detail::head_slice(q2, h, hd);
        loop_detail::require_shape(
            state.k1[h].rows == config.seq_len && state.k1[h].cols == hd &&
                state.v1[h].rows == config.seq_len && state.v1[h].cols == hd,
            "kv_cache head shape mismatch");
        Matrix global_h = scaled_attention(q2h, state.k1[h], state.v1[h]);
        Matrix local_h = scaled_attention(q2h, loop_detail::head_slice(k2, h, hd),
                                          loop_detail::head_slice(v2, h, hd), mask);
        loop_detail::write_head(parts.global, global_h, h, hd);
        loop_detail::write_head(parts.local, local_h, h, hd);
        for (size_t t = 0; t < config.seq_len; ++t) {
            double logit = weights.gate_b[h];
            for (size_t c = 0; c < hd; ++c) logit += q2h.at(t, c) * weights.gate_w.at(h, c);
            double g = loop_detail::sigmoid(logit);
            parts.gates.at(t, h) = g;
            for (size_t c = 0; c < hd; ++c) {
                parts.output.at(t, h * hd + c) =
                    g * global_h.at(t, c) + (1.0 - g) * local_h.at(t, c);
            }
        }
    }
    return parts;
}

inline Matrix iteration_two(const LoopConfig& config, const IterationState& state,
                            const LoopWeights& weights) {
    return iteration_two_parts(config, state, weights).output;
}

inline Matrix loop_forward(const LoopConfig& config, const LoopWeights& weights,
                           const Matrix& embeddings) {
    return iteration_two(config, iteration_one(config, embeddings, weights), weights);
}

// ---------------------------------------------------------------------------
// Fingerprints and recompute validation
// ---------------------------------------------------------------------------

struct Fingerprint {
    uint64_t digest = 0;

    bool operator==(const Fingerprint&) const = default;
};

// FNV-1a over the canonical serialization: u64 rows, u64 cols, then each
// entry's IEEE-754 bit pattern, all little-endian row-major.
inline Fingerprint fingerprint(const Matrix& m) {
    uint64_t state = kFnvOffsetBasis;
    auto feed_u64 = [&](uint64_t v) {
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(v >> (8 * b));
        state = fnv1a64(bytes, sizeof bytes, state);
    };
    feed_u64(m.rows);
    feed_u64(m.cols);
    for (double v : m.data) {
        if (!std::isfinite(v)) {
            raise(ErrorCode::non_finite, "cannot fingerprint a non-finite tensor");
        }
        feed_u64(std::bit_cast<uint64_t>(v));
    }
    return Fingerprint{state};
}

using CorruptionHook = std::function<void(Matrix&)>;

// Runs the full two-iteration forward twice from identical inputs and compares
// fingerprints. The hook lets tests model a silent fault in the second run.
inline bool verify_recompute(const LoopConfig& config, const LoopWeights& weights,
                             const Matrix& embeddings, const CorruptionHook& corrupt = {}) {
    Matrix first = loop_forward(config, weights, embeddings);
    Matrix second = loop_forward(config, weights, embeddings);
    if (corrupt) corrupt(second);
    return fingerprint(first) == fingerprint(second);
}

// ---------------------------------------------------------------------------
// Seeded initialization
// ---------------------------------------------------------------------------

namespace loop_detail {

inline Matrix random_matrix(size_t rows, size_t cols, uint64_t seed, double scale) {
    Rng rng(seed);
    Matrix out(rows, cols);
    for (double& v : out.data) v = rng.uniform(-scale, scale);
    return out;
}

}  // namespace loop_detail

inline LoopWeights random_weights(const LoopConfig& config, uint64_t seed) {
    config.validate();
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    LoopWeights w;
    w.wq = loop_detail::random_matrix(config.d_model, config.d_model,
                                      derive_seed(seed, "loopref/wq"), scale);
    w.wk = loop_detail::random_matrix(config.d_model, config.d_model,
                                      derive_seed(seed, "loopref/wk"), scale);
    w.wv = loop_detail::random_matrix(config.d_model, config.d_model,
                                      derive_seed(seed, "loopref/wv"), scale);
    w.wo = loop_detail::random_matrix(config.d_model, config.d_model,
                                      derive_seed(seed, "loopref/wo"), scale);
    w.gate_w = loop_detail::random_matrix(config.n_heads, config.head_dim(),
                                          derive_seed(seed, "loopref/gate_w"), 1.0);
    Rng bias_rng(derive_seed(seed, "loopref/gate_b"));
    for (size_t h = 0; h < config.n_heads; ++h) w.gate_b.push_back(bias_rng.uniform(-1.0, 1.0));
    return w;
}

inline Matrix random_embeddings(const LoopConfig& config, uint64_t seed) {
    config.validate();
    return loop_detail::random_matrix(config.seq_len, config.d_model,
                                      derive_seed(seed, "loopref/embeddings"), 1.0);
}

// ---------------------------------------------------------------------------
// Flat binary tensor serialization
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTensorMagic = "FTENSOR1";

inline void write_tensor(std::ostream& out, const Matrix& m) {
    auto put_u64 = [&](uint64_t v) {
        char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>(v >> (8 * b));
        out.write(bytes, sizeof bytes);
    };
    out.write(kTensorMagic.data(), static_cast<std::streamsize>(kTensorMagic.size()));
    put_u64(m.rows);
    put_u64(m.cols);
    for (double v : m.data) put_u64(std::bit_cast<uint64_t>(v));
    if (!out) raise(ErrorCode::io_error, "tensor write failed");
}

inline Matrix read_tensor(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::string_view(magic, 8) != kTensorMagic) {
        raise(ErrorCode::bad_format, "missing tensor magic");
    }
    auto get_u64 = [&]() -> uint64_t {
        char bytes[8];
        if (!in.read(bytes, sizeof bytes)) raise(ErrorCode::bad_format, "truncated tensor file");
        uint64_t v = 0;
        for (int b = 0; b < 8; ++b) {
            v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
        }
        return v;
    };
    uint64_t rows = get_u64();
    uint64_t cols = get_u64();
    if (rows > (1ULL << 20) || cols > (1ULL << 20) || rows * cols > (1ULL << 26)) {
        raise(ErrorCode::bad_format, "tensor dimensions out of range");
    }
    Matrix m(static_cast<size_t>(rows), static_cast<size_t>(cols));
    for (double& v : m.data) v = std::bit_cast<double>(get_u64());
    return m;
}

inline void write_tensor_file(const std::string& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(ErrorCode::io_error, "cannot open '" + path + "' for writing");
    write_tensor(out, m);
}

inline Matrix read_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::io_error, "cannot open '" + path + "' for reading");
    return read_tensor(in);
}

}  // namespace forge
