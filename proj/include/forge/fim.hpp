#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "forge/error.hpp"
#include "forge/ingest.hpp"
#include "forge/rng.hpp"
#include "forge/sentinel.hpp"
#include "forge/syntax.hpp"
#include "forge/utf8.hpp"

// Fill-in-the-middle sample construction: three splitting strategies over a
// source file plus rendering into the file-level and repo-level sentinel
// templates. All offsets are byte offsets that fall on UTF-8 character
// boundaries; prefix + middle + suffix always reassembles the file
// byte-exactly.

namespace forge {

enum class FimStrategy { random_boundary, random_line, syntax };

inline std::string_view fim_strategy_name(FimStrategy s) {
    switch (s) {
        case FimStrategy::random_boundary: return "random_boundary";
        case FimStrategy::random_line: return "random_line";
        case FimStrategy::syntax: return "syntax";
    }
    return "random_boundary";
}

inline FimStrategy fim_strategy_from_name(std::string_view name) {
    if (name == "random_boundary") return FimStrategy::random_boundary;
    if (name == "random_line") return FimStrategy::random_line;
    if (name == "syntax") return FimStrategy::syntax;
    raise(ErrorCode::invalid_config, "unknown fim strategy: " + std::string(name));
}

struct FimSpan {
    size_t start = 0; // half-open byte range [start, end)
    size_t end = 0;
    FimStrategy strategy = FimStrategy::random_boundary;
    std::optional<NodeLevel> level; // present iff strategy == syntax
};

struct FimSample {
    std::string file_id;
    std::string prefix;
    std::string middle;
    std::string suffix;
    FimSpan span;
    // (file_path, file_content) pairs; empty for file-level samples
    std::vector<std::pair<std::string, std::string>> context;
};

enum class RenderKind { file_level, repo_level };

inline std::string_view render_kind_name(RenderKind k) {
    return k == RenderKind::file_level ? "file_level" : "repo_level";
}

struct RenderedSample {
    std::string text;
    RenderKind kind = RenderKind::file_level;
};

// Middle-length bounds for random-boundary splitting, as fractions of the
// file's character count. Defaults avoid one-character and whole-file
// middles.
struct BoundaryBounds {
    double min_frac = 0.05;
    double max_frac = 0.5;
};

// -------------------------------------------------------------- splitting --

inline FimSpan split_random_boundary(const SourceFile& file, Rng& rng,
                                     BoundaryBounds bounds = {}) {
    std::vector<size_t> starts = char_starts(file.content);
    const size_t n = starts.size();
    if (n < 3) raise(ErrorCode::file_too_short, "need at least 3 characters: " + file.file_id());
    if (!(bounds.min_frac >= 0.0 && bounds.min_frac <= bounds.max_frac && bounds.max_frac <= 1.0)) {
        raise(ErrorCode::invalid_config, "boundary bounds must satisfy 0 <= min <= max <= 1");
    }
    auto lo = static_cast<size_t>(std::ceil(bounds.min_frac * static_cast<double>(n)));
    auto hi = static_cast<size_t>(std::floor(bounds.max_frac * static_cast<double>(n)));
    lo = std::max<size_t>(lo, 1);
    hi = std::min<size_t>(hi, n);
    if (lo > hi) {
        raise(ErrorCode::file_too_short,
              "no middle length satisfies the bounds: " + file.file_id());
    }
    size_t middle_chars = lo + rng.below(hi - lo + 1);
    size_t start_char = rng.below(n - middle_chars + 1);
    size_t end_char = start_char + middle_chars;
    FimSpan span;
    span.start = starts[start_char];
    span.end = end_char == n ? file.content.size() : starts[end_char];
    span.strategy = FimStrategy::random_boundary;
    return span;
}

inline FimSpan split_random_line(const SourceFile& file, Rng& rng) {
    if (file.line_count < 3) {
        raise(ErrorCode::too_few_lines, "need at least 3 lines: " + file.file_id());
    }
    std::vector<size_t> line_starts = {0};
    for (size_t i = 0; i < file.content.size(); ++i) {
        if (file.content[i] == '\n' && i + 1 < file.content.size()) {
            line_starts.push_back(i + 1);
        }
    }
    size_t idx = rng.index(line_starts.size());
    FimSpan span;
    span.start = line_starts[idx];
    span.end = idx + 1 < line_starts.size() ? line_starts[idx + 1] : file.content.size();
    span.strategy = FimStrategy::random_line;
    return span;
}

inline FimSpan split_syntax(const SourceFile& file, const ParseReport& report, NodeLevel level,
                            Rng& rng) {
    if (!report.syntactically_valid) {
        raise(ErrorCode::no_node_at_level,
              "file is not syntactically valid: " + file.file_id());
    }
    auto it = report.node_counts.find(level);
    if (it == report.node_counts.end() || it->second == 0) {
        raise(ErrorCode::no_node_at_level,
              "no node at requested level: " + file.file_id());
    }
    SyntaxTree tree = parse_source(file.language, file.content);
    std::vector<SyntaxNode> eligible = tree.nodes_at(level);
    if (eligible.empty()) {
        raise(ErrorCode::no_node_at_level, "no node at requested level: " + file.file_id());
    }
    const SyntaxNode& pick = eligible[rng.index(eligible.size())];
    FimSpan span;
    span.start = pick.begin;
    span.end = pick.end;
    span.strategy = FimStrategy::syntax;
    span.level = level;
    return span;
}

// --------------------------------------------------------------- samples --

inline FimSample make_fim_sample(const SourceFile& file, const FimSpan& span) {
    if (span.start > span.end || span.end > file.content.size()) {
        raise(ErrorCode::bad_format, "span out of range for " + file.file_id());
    }
    FimSample s;
    s.file_id = file.file_id();
    s.prefix = file.content.substr(0, span.start);
    s.middle = file.content.substr(span.start, span.end - span.start);
    s.suffix = file.content.substr(span.end);
    s.span = span;
    return s;
}

// Identifier token set used as the lexical similarity signal for context
// selection.
inline std::set<std::string> identifier_set(std::string_view content) {
    std::set<std::string> out;
    size_t i = 0;
    while (i < content.size()) {
        unsigned char c = static_cast<unsigned char>(content[i]);
        if (syntax_detail::ident_start(c) && !std::isdigit(c)) {
            size_t b = i;
            while (i < content.size() &&
                   syntax_detail::ident_cont(static_cast<unsigned char>(content[i]))) {
                ++i;
            }
            out.insert(std::string(content.substr(b, i - b)));
        } else {
            ++i;
        }
    }
    return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Top-k same-repo files ranked by identifier-set Jaccard similarity to the
// target; ties broken by lexicographic path; target excluded.
inline std::vector<std::pair<std::string, std::string>>
select_context_files(const SourceFile& target, const std::vector<SourceFile>& repo_files,
                     size_t k) {
    std::vector<std::pair<std::string, std::string>> out;
    if (k == 0) return out;
    auto target_ids = identifier_set(target.content);
    struct Scored {
        double score;
        const SourceFile* file;
    };
    std::vector<Scored> scored;
    for (const auto& f : repo_files) {
        if (f.repo_name != target.repo_name || f.path == target.path) continue;
        scored.push_back({jaccard(target_ids, identifier_set(f.content)), &f});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.file->path < b.file->path;
    });
    for (const auto& s : scored) {
        if (out.size() == k) break;
        out.emplace_back(s.file->path, s.file->content);
    }
    return out;
}

// -------------------------------------------------------------- rendering --

namespace fim_detail {

inline void check_sentinel_counts(const RenderedSample& r, size_t context_files) {
    bool ok = count_occurrences(r.text, kFimPrefix) == 1 &&
              count_occurrences(r.text, kFimSuffix) == 1 &&
              count_occurrences(r.text, kFimMiddle) == 1 &&
              count_occurrences(r.text, kImEnd) == 1;
    if (r.kind == RenderKind::repo_level) {
        ok = ok && count_occurrences(r.text, kRepoName) == 1 &&
             count_occurrences(r.text, kFileSep) == context_files + 1;
    } else {
        ok = ok && count_occurrences(r.text, kRepoName) == 0 &&
             count_occurrences(r.text, kFileSep) == 0;
    }
    if (!ok) {
        raise(ErrorCode::sentinel_collision,
              "rendered sample violates sentinel-count invariants");
    }
}

inline std::string fim_body(const FimSample& s) {
    std::string out;
    out.reserve(s.prefix.size() + s.suffix.size() + s.middle.size() + 64);
    out += kFimPrefix;
    out += s.prefix;
    out += kFimSuffix;
    out += s.suffix;
    out += kFimMiddle;
    out += s.middle;
    out += kImEnd;
    return out;
}

// file_id is "<repo_name>/<path>"; repo names cannot contain '/'.
inline std::pair<std::string_view, std::string_view> split_file_id(std::string_view file_id) {
    size_t slash = file_id.find('/');
    if (slash == std::string_view::npos || slash == 0 || slash + 1 == file_id.size()) {
        raise(ErrorCode::bad_format, "malformed file_id: " + std::string(file_id));
    }
    return {file_id.substr(0, slash), file_id.substr(slash + 1)};
}

} // namespace fim_detail

inline RenderedSample render_file_level(const FimSample& sample) {
    if (!sample.context.empty()) {
        raise(ErrorCode::invalid_config, "file-level rendering takes no context files");
    }
    RenderedSample r;
    r.kind = RenderKind::file_level;
    r.text = fim_detail::fim_body(sample);
    fim_detail::check_sentinel_counts(r, 0);
    return r;
}

inline RenderedSample render_repo_level(const FimSample& sample) {
    if (sample.context.empty()) {
        raise(ErrorCode::invalid_config, "repo-level rendering requires context files");
    }
    auto [repo, target_path] = fim_detail::split_file_id(sample.file_id);
    RenderedSample r;
    r.kind = RenderKind::repo_level;
    r.text += kRepoName;
    r.text += repo;
    r.text += '\n';
    for (const auto& [path, content] : sample.context) {
        if (path == target_path) {
            raise(ErrorCode::context_path_collision,
                  "context file collides with target path: " + path);
        }
        r.text += kFileSep;
        r.text += path;
        r.text += '\n';
        r.text += content;
        // Context files are newline-terminated in the rendered stream so the
        // next <|file_sep|> starts a line.
        if (content.empty() || content.back() != '\n') r.text += '\n';
    }
    r.text += kFileSep;
    r.text += target_path;
    r.text += '\n';
    r.text += fim_detail::fim_body(sample);
    fim_detail::check_sentinel_counts(r, sample.context.size());
    return r;
}

// Inverse of the renderers: recover (prefix, middle, suffix) from rendered
// text. Used by consumers that need to reassemble the original document.
struct ParsedFim {
    std::string prefix;
    std::string middle;
    std::string suffix;
};

inline ParsedFim parse_rendered_fim(std::string_view text) {
    size_t p = text.find(kFimPrefix);
    size_t s = text.find(kFimSuffix);
    size_t m = text.find(kFimMiddle);
    size_t e = text.find(kImEnd);
    if (p == std::string_view::npos || s == std::string_view::npos ||
        m == std::string_view::npos || e == std::string_view::npos ||
        !(p < s && s < m && m < e)) {
        raise(ErrorCode::bad_format, "not a rendered FIM sample");
    }
    ParsedFim out;
    size_t p0 = p + std::string_view(kFimPrefix).size();
    size_t s0 = s + std::string_view(kFimSuffix).size();
    size_t m0 = m + std::string_view(kFimMiddle).size();
    out.prefix = std::string(text.substr(p0, s - p0));
    out.suffix = std::string(text.substr(s0, m - s0));
    out.middle = std::string(text.substr(m0, e - m0));
    return out;
}

} // namespace forge
