#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forge/error.hpp"

// Line-oriented unified diff: Myers shortest-edit-script construction,
// rendering in the standard unified format (3 context lines, a/ b/ path
// prefixes, /dev/null add/delete sides, "\ No newline at end of file"
// markers), and a strict apply that parses the rendered text back. The
// pairing is exercised as a round trip: apply(old, diff(old, new)) == new,
// byte-exact, for every patch the toolkit emits.

namespace forge {

struct DiffStats {
    uint64_t files_changed = 0;
    uint64_t lines_added = 0;
    uint64_t lines_removed = 0;

    bool operator==(const DiffStats&) const = default;
};

// path -> full file content
using TreeContents = std::map<std::string, std::string>;

namespace diff_detail {

// A document line without its newline, plus whether the newline was present
// (only the final line of a document may lack it). Lines compare equal only
// if both text and newline status match, mirroring how patch tools treat a
// missing final newline as a difference.
struct Line {
    std::string_view text;
    bool has_newline = true;

    bool operator==(const Line&) const = default;
};

inline std::vector<Line> split_lines(std::string_view content) {
    std::vector<Line> out;
    size_t pos = 0;
    while (pos < content.size()) {
        size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) {
            out.push_back({content.substr(pos), false});
            break;
        }
        out.push_back({content.substr(pos, nl - pos), true});
        pos = nl + 1;
    }
    return out;
}

struct Op {
    char tag; // ' ' equal, '-' delete, '+' insert
    Line line;
};

// Myers O(ND) with full trace, guarded by a depth cap. Inputs are interned
// line ids. Returns std::nullopt when the edit distance exceeds the cap;
// callers fall back to a non-minimal whole-replacement script, which is
// still a valid diff.
inline std::optional<std::vector<char>> myers_tags(const std::vector<uint32_t>& a,
                                                   const std::vector<uint32_t>& b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    // Trace memory grows with the square of the edit distance; 2800 keeps the
    // worst case around 30 MB. Larger rewrites take the fallback path.
    const int cap = std::min(n + m, 2800);
    std::vector<int> v(2 * cap + 3, 0);
    const int off = cap + 1;
    std::vector<std::vector<int>> trace;
    int found_d = -1;
    for (int d = 0; d <= cap && found_d < 0; ++d) {
        std::vector<int> slice(static_cast<size_t>(2 * d + 1));
        for (int k = -d; k <= d; ++k) slice[static_cast<size_t>(k + d)] = v[off + k];
        trace.push_back(std::move(slice));
        for (int k = -d; k <= d; k += 2) {
            int x;
            if (k == -d || (k != d && v[off + k - 1] < v[off + k + 1])) {
                x = v[off + k + 1];
            } else {
                x = v[off + k - 1] + 1;
            }
            int y = x - k;
            while (x < n && y < m && a[static_cast<size_t>(x)] == b[static_cast<size_t>(y)]) {
                ++x;
                ++y;
            }
            v[off + k] = x;
            if (x >= n && y >= m) {
                found_d = d;
                break;
            }
        }
    }
    if (found_d < 0) return std::nullopt;

    // Backtrack, building the tag sequence reversed.
    std::vector<char> tags;
    int x = n, y = m;
    for (int d = found_d; d > 0; --d) {
        const auto& prev = trace[static_cast<size_t>(d)];
        auto at = [&](int k) { return prev[static_cast<size_t>(k + d)]; };
        int k = x - y;
        int prev_k;
        if (k == -d || (k != d && at(k - 1) < at(k + 1))) {
            prev_k = k + 1;
        } else {
            prev_k = k - 1;
        }
        int prev_x = at(prev_k);
        int prev_y = prev_x - prev_k;
        while (x > prev_x && y > prev_y) {
            tags.push_back(' ');
            --x;
            --y;
        }
        if (x == prev_x) {
            tags.push_back('+'); // consumed b[prev_y]
        } else {
            tags.push_back('-'); // consumed a[prev_x]
        }
        x = prev_x;
        y = prev_y;
    }
    while (x > 0 && y > 0) {
        tags.push_back(' ');
        --x;
        --y;
    }
    std::reverse(tags.begin(), tags.end());
    return tags;
}

inline std::vector<Op> line_diff(const std::vector<Line>& a, const std::vector<Line>& b) {
    // Trim the common prefix and suffix before running Myers.
    size_t pre = 0;
    while (pre < a.size() && pre < b.size() && a[pre] == b[pre]) ++pre;
    size_t suf = 0;
    while (suf < a.size() - pre && suf < b.size() - pre &&
           a[a.size() - 1 - suf] == b[b.size() - 1 - suf]) {
        ++suf;
    }
    std::vector<Line> mid_a(a.begin() + static_cast<long>(pre),
                            a.end() - static_cast<long>(suf));
    std::vector<Line> mid_b(b.begin() + static_cast<long>(pre),
                            b.end() - static_cast<long>(suf));

    // Intern lines to integer ids for cheap comparison.
    std::unordered_map<std::string, uint32_t> ids;
    auto intern = [&](const Line& l) {
        std::string key(l.text);
        key.push_back(l.has_newline ? '\n' : '\x01');
        auto [it, _] = ids.emplace(std::move(key), static_cast<uint32_t>(ids.size()));
        return it->second;
    };
    std::vector<uint32_t> ia, ib;
    ia.reserve(mid_a.size());
    ib.reserve(mid_b.size());
    for (const auto& l : mid_a) ia.push_back(intern(l));
    for (const auto& l : mid_b) ib.push_back(intern(l));

    std::vector<Op> ops;
    ops.reserve(a.size() + b.size());
    for (size_t i = 0; i < pre; ++i) ops.push_back({' ', a[i]});
    auto tags = myers_tags(ia, ib);
    if (tags) {
        size_t x = 0, y = 0;
        for (char t : *tags) {
            if (t == ' ') {
                ops.push_back({' ', mid_a[x]});
                ++x;
                ++y;
            } else if (t == '-') {
                ops.push_back({'-', mid_a[x]});
                ++x;
            } else {
                ops.push_back({'+', mid_b[y]});
                ++y;
            }
        }
    } else {
        for (const auto& l : mid_a) ops.push_back({'-', l});
        for (const auto& l : mid_b) ops.push_back({'+', l});
    }
    for (size_t i = 0; i < suf; ++i) ops.push_back({' ', a[a.size() - suf + i]});
    return ops;
}

inline void append_entry(std::string& out, char tag, const Line& line) {
    out.push_back(tag);
    out.append(line.text);
    out.push_back('\n');
    if (!line.has_newline) out.append("\\ No newline at end of file\n");
}

} // namespace diff_detail

inline constexpr int kDiffContextLines = 3;

// Unified diff for a single file. Empty result when contents are identical.
// Pass std::nullopt for a missing side (file add / delete).
inline std::string render_file_diff(const std::string& path,
                                    const std::optional<std::string_view>& old_content,
                                    const std::optional<std::string_view>& new_content,
                                    int context = kDiffContextLines) {
    using diff_detail::Line;
    if (!old_content && !new_content) {
        raise(ErrorCode::invalid_config, "both diff sides missing for " + path);
    }
    if (old_content && new_content && *old_content == *new_content) return {};

    std::vector<Line> a =
        old_content ? diff_detail::split_lines(*old_content) : std::vector<Line>{};
    std::vector<Line> b =
        new_content ? diff_detail::split_lines(*new_content) : std::vector<Line>{};
    auto ops = diff_detail::line_diff(a, b);

    std::string out;
    out += "diff --git a/" + path + " b/" + path + "\n";
    if (!old_content) out += "new file mode 100644\n";
    if (!new_content) out += "deleted file mode 100644\n";
    out += old_content ? "--- a/" + path + "\n" : std::string("--- /dev/null\n");
    out += new_content ? "+++ b/" + path + "\n" : std::string("+++ /dev/null\n");

    // Group ops into hunks: changes joined when separated by at most
    // 2*context equal lines, with `context` equal lines of margin.
    struct Hunk {
        size_t first_op, last_op; // inclusive op range
    };
    std::vector<Hunk> hunks;
    size_t i = 0;
    while (i < ops.size()) {
        if (ops[i].tag == ' ') {
            ++i;
            continue;
        }
        size_t begin = i;
        size_t last_change = i;
        size_t j = i + 1;
        while (j < ops.size()) {
            if (ops[j].tag != ' ') {
                last_change = j;
                ++j;
                continue;
            }
            // count the equal run
            size_t run = 0;
            while (j + run < ops.size() && ops[j + run].tag == ' ') ++run;
            if (j + run < ops.size() && run <= static_cast<size_t>(2 * context)) {
                j += run; // next change close enough: same hunk
            } else {
                break;
            }
        }
        size_t first = begin >= static_cast<size_t>(context) ? begin - static_cast<size_t>(context) : 0;
        size_t last = std::min(ops.size() - 1, last_change + static_cast<size_t>(context));
        hunks.push_back({first, last});
        i = last + 1;
    }

    // Emit hunks with correct line numbering.
    size_t old_line = 0, new_line = 0; // 0-based counts consumed before cursor
    size_t op_idx = 0;
    for (const auto& h : hunks) {
        while (op_idx < h.first_op) {
            if (ops[op_idx].tag == ' ') {
                ++old_line;
                ++new_line;
            } else if (ops[op_idx].tag == '-') {
                ++old_line;
            } else {
                ++new_line;
            }
            ++op_idx;
        }
        size_t old_count = 0, new_count = 0;
        for (size_t k = h.first_op; k <= h.last_op; ++k) {
            if (ops[k].tag == ' ') {
                ++old_count;
                ++new_count;
            } else if (ops[k].tag == '-') {
                ++old_count;
            } else {
                ++new_count;
            }
        }
        // Start is 1-based for non-empty ranges; an empty range reports the
        // line before the edit position.
        size_t old_start = old_count == 0 ? old_line : old_line + 1;
        size_t new_start = new_count == 0 ? new_line : new_line + 1;
        out += "@@ -" + std::to_string(old_start) + "," + std::to_string(old_count) + " +" +
               std::to_string(new_start) + "," + std::to_string(new_count) + " @@\n";
        for (size_t k = h.first_op; k <= h.last_op; ++k) {
            diff_detail::append_entry(out, ops[k].tag, ops[k].line);
            if (ops[k].tag == ' ') {
                ++old_line;
                ++new_line;
            } else if (ops[k].tag == '-') {
                ++old_line;
            } else {
                ++new_line;
            }
        }
        op_idx = h.last_op + 1;
    }
    return out;
}

// Multi-file unified diff across two trees, paths in sorted order.
inline std::string diff_trees(const TreeContents& old_tree, const TreeContents& new_tree,
                              int context = kDiffContextLines) {
    std::vector<std::string> paths;
    for (const auto& [p, _] : old_tree) paths.push_back(p);
    for (const auto& [p, _] : new_tree) {
        if (!old_tree.count(p)) paths.push_back(p);
    }
    std::sort(paths.begin(), paths.end());
    std::string out;
    for (const auto& p : paths) {
        auto oi = old_tree.find(p);
        auto ni = new_tree.find(p);
        std::optional<std::string_view> o, n;
        if (oi != old_tree.end()) o = std::string_view(oi->second);
        if (ni != new_tree.end()) n = std::string_view(ni->second);
        out += render_file_diff(p, o, n, context);
    }
    return out;
}

// ---------------------------------------------------------------- parsing --

struct HunkEntry {
    char tag; // ' ', '-', '+'
    std::string text;
    bool has_newline = true;
};

struct Hunk {
    uint64_t old_start = 0; // 1-based; 0 allowed when old_count == 0
    uint64_t old_count = 0;
    uint64_t new_start = 0;
    uint64_t new_count = 0;
    std::vector<HunkEntry> entries;
};

struct FileDiff {
    std::string path;
    bool old_present = true;
    bool new_present = true;
    std::vector<Hunk> hunks;
};

namespace diff_detail {

inline uint64_t parse_u64(std::string_view s, size_t& pos) {
    uint64_t v = 0;
    bool any = false;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
        v = v * 10 + static_cast<uint64_t>(s[pos] - '0');
        ++pos;
        any = true;
    }
    if (!any) raise(ErrorCode::bad_format, "expected number in hunk header");
    return v;
}

inline std::pair<uint64_t, uint64_t> parse_range(std::string_view s, size_t& pos) {
    uint64_t start = parse_u64(s, pos);
    uint64_t count = 1;
    if (pos < s.size() && s[pos] == ',') {
        ++pos;
        count = parse_u64(s, pos);
    }
    return {start, count};
}

} // namespace diff_detail

inline std::vector<FileDiff> parse_patch(std::string_view patch) {
    std::vector<FileDiff> out;
    size_t pos = 0;
    auto next_line = [&]() -> std::optional<std::string_view> {
        if (pos >= patch.size()) return std::nullopt;
        size_t nl = patch.find('\n', pos);
        std::string_view line;
        if (nl == std::string_view::npos) {
            line = patch.substr(pos);
            pos = patch.size();
        } else {
            line = patch.substr(pos, nl - pos);
            pos = nl + 1;
        }
        return line;
    };

    std::optional<std::string_view> line = next_line();
    while (line) {
        if (!line->starts_with("diff --git ")) {
            raise(ErrorCode::bad_format, "expected 'diff --git' header");
        }
        FileDiff fd;
        // headers until ---; tolerate extended headers
        std::string old_path, new_path;
        while ((line = next_line())) {
            if (line->starts_with("--- ")) break;
            if (line->starts_with("diff --git ")) {
                raise(ErrorCode::bad_format, "file diff without hunks");
            }
        }
        if (!line) raise(ErrorCode::bad_format, "missing --- header");
        std::string_view old_side = line->substr(4);
        line = next_line();
        if (!line || !line->starts_with("+++ ")) {
            raise(ErrorCode::bad_format, "missing +++ header");
        }
        std::string_view new_side = line->substr(4);
        fd.old_present = old_side != "/dev/null";
        fd.new_present = new_side != "/dev/null";
        if (fd.old_present) {
            if (!old_side.starts_with("a/")) raise(ErrorCode::bad_format, "bad --- path");
            old_path = std::string(old_side.substr(2));
        }
        if (fd.new_present) {
            if (!new_side.starts_with("b/")) raise(ErrorCode::bad_format, "bad +++ path");
            new_path = std::string(new_side.substr(2));
        }
        if (!fd.old_present && !fd.new_present) {
            raise(ErrorCode::bad_format, "both sides /dev/null");
        }
        fd.path = fd.new_present ? new_path : old_path;

        line = next_line();
        while (line && line->starts_with("@@ ")) {
            Hunk h;
            std::string_view header = *line;
            size_t hp = 3;
            if (hp >= header.size() || header[hp] != '-') {
                raise(ErrorCode::bad_format, "bad hunk header");
            }
            ++hp;
            std::tie(h.old_start, h.old_count) = diff_detail::parse_range(header, hp);
            while (hp < header.size() && header[hp] == ' ') ++hp;
            if (hp >= header.size() || header[hp] != '+') {
                raise(ErrorCode::bad_format, "bad hunk header");
            }
            ++hp;
            std::tie(h.new_start, h.new_count) = diff_detail::parse_range(header, hp);

            uint64_t seen_old = 0, seen_new = 0;
            while (seen_old < h.old_count || seen_new < h.new_count) {
                line = next_line();
                if (!line) raise(ErrorCode::bad_format, "truncated hunk");
                if (line->starts_with("\\")) {
                    if (h.entries.empty()) raise(ErrorCode::bad_format, "stray \\ line");
                    h.entries.back().has_newline = false;
                    continue;
                }
                char tag = line->empty() ? ' ' : (*line)[0];
                if (tag != ' ' && tag != '-' && tag != '+') {
                    raise(ErrorCode::bad_format, "bad hunk entry");
                }
                std::string text = line->empty() ? std::string() : std::string(line->substr(1));
                h.entries.push_back({tag, std::move(text), true});
                if (tag == ' ') {
                    ++seen_old;
                    ++seen_new;
                } else if (tag == '-') {
                    ++seen_old;
                } else {
                    ++seen_new;
                }
            }
            // a trailing \-marker can follow the final entry
            auto peek = next_line();
            if (peek && peek->starts_with("\\")) {
                if (h.entries.empty()) raise(ErrorCode::bad_format, "stray \\ line");
                h.entries.back().has_newline = false;
                line = next_line();
            } else {
                line = peek;
            }
            fd.hunks.push_back(std::move(h));
        }
        out.push_back(std::move(fd));
    }
    return out;
}

// ------------------------------------------------------------------ apply --

namespace diff_detail {

inline std::string apply_file_diff(const FileDiff& fd, std::string_view old_content) {
    std::vector<Line> old_lines = split_lines(old_content);
    struct OwnedLine {
        std::string text;
        bool has_newline;
    };
    std::vector<OwnedLine> result;
    size_t cursor = 0; // old lines consumed

    for (const auto& h : fd.hunks) {
        // position of the hunk's first old line, 0-based
        size_t at = h.old_count == 0 ? h.old_start : h.old_start - 1;
        if (at < cursor || at > old_lines.size()) {
            raise(ErrorCode::apply_failed, "hunk out of order in " + fd.path);
        }
        while (cursor < at) {
            result.push_back({std::string(old_lines[cursor].text), old_lines[cursor].has_newline});
            ++cursor;
        }
        for (const auto& e : h.entries) {
            if (e.tag == ' ' || e.tag == '-') {
                if (cursor >= old_lines.size() || old_lines[cursor].text != e.text ||
                    old_lines[cursor].has_newline != e.has_newline) {
                    raise(ErrorCode::apply_failed,
                          "context mismatch in " + fd.path + " at old line " +
                              std::to_string(cursor + 1));
                }
                if (e.tag == ' ') result.push_back({e.text, e.has_newline});
                ++cursor;
            } else {
                result.push_back({e.text, e.has_newline});
            }
        }
    }
    while (cursor < old_lines.size()) {
        result.push_back({std::string(old_lines[cursor].text), old_lines[cursor].has_newline});
        ++cursor;
    }

    std::string out;
    for (const auto& l : result) {
        out += l.text;
        if (l.has_newline) out += '\n';
    }
    return out;
}

} // namespace diff_detail

// Strict application of a multi-file patch to a tree. Any mismatch raises
// apply_failed; the input tree is never partially mutated on error.
inline TreeContents apply_patch(const TreeContents& old_tree, std::string_view patch) {
    TreeContents result = old_tree;
    for (const auto& fd : parse_patch(patch)) {
        if (!fd.old_present) {
            if (result.count(fd.path)) {
                raise(ErrorCode::apply_failed, "add target already exists: " + fd.path);
            }
            result[fd.path] = diff_detail::apply_file_diff(fd, "");
        } else {
            auto it = result.find(fd.path);
            if (it == result.end()) {
                raise(ErrorCode::apply_failed, "patch target missing: " + fd.path);
            }
            std::string updated = diff_detail::apply_file_diff(fd, it->second);
            if (!fd.new_present) {
                if (!updated.empty()) {
                    raise(ErrorCode::apply_failed,
                          "delete did not empty the file: " + fd.path);
                }
                result.erase(it);
            } else {
                it->second = std::move(updated);
            }
        }
    }
    return result;
}

// Recount of a patch's hunks; the authoritative source for triplet stats.
inline DiffStats patch_stats(std::string_view patch) {
    DiffStats stats;
    if (patch.empty()) return stats;
    for (const auto& fd : parse_patch(patch)) {
        ++stats.files_changed;
        for (const auto& h : fd.hunks) {
            for (const auto& e : h.entries) {
                if (e.tag == '+') ++stats.lines_added;
                if (e.tag == '-') ++stats.lines_removed;
            }
        }
    }
    return stats;
}

inline std::vector<std::string> patch_changed_paths(std::string_view patch) {
    std::vector<std::string> out;
    if (patch.empty()) return out;
    for (const auto& fd : parse_patch(patch)) out.push_back(fd.path);
    return out;
}

} // namespace forge
