#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/lang.hpp"
#include "forge/proc.hpp"
#include "forge/sentinel.hpp"
#include "forge/utf8.hpp"

namespace forge {

enum class RepoKind { working_tree, git_repo };

struct RepoSource {
    std::string repo_name; // unique within a run
    std::filesystem::path root;
    RepoKind kind = RepoKind::working_tree;
};

inline void validate_repo_name(std::string_view name) {
    if (name.empty()) raise(ErrorCode::invalid_config, "repo_name must be non-empty");
    if (name.find('/') != std::string_view::npos || name.find('\\') != std::string_view::npos) {
        raise(ErrorCode::invalid_config, "repo_name must not contain path separators");
    }
    if (contains_sentinel(name)) {
        raise(ErrorCode::invalid_config, "repo_name must not contain sentinel strings");
    }
}

struct SourceFile {
    std::string repo_name;
    std::string path; // repo-relative, '/'-separated
    std::string content;
    Language language = Language::unknown;
    uint64_t line_count = 0;
    uint64_t byte_len = 0;

    std::string file_id() const { return repo_name + "/" + path; }
};

// Newline-terminated lines plus a trailing partial line, if any.
inline uint64_t count_lines(std::string_view content) {
    uint64_t lines = 0;
    for (char c : content) {
        if (c == '\n') ++lines;
    }
    if (!content.empty() && content.back() != '\n') ++lines;
    return lines;
}

inline SourceFile make_source_file(std::string repo_name, std::string path, std::string content) {
    SourceFile f;
    f.repo_name = std::move(repo_name);
    f.path = std::move(path);
    f.language = detect_language(f.path, content);
    f.byte_len = content.size();
    f.line_count = count_lines(content);
    f.content = std::move(content);
    return f;
}

struct FilterConfig {
    uint64_t max_bytes = 1 << 20; // 1 MiB
    uint64_t max_lines = 20000;
};

// Reject reasons, tallied into the run manifest.
struct RejectCounts {
    std::map<std::string, uint64_t> by_reason;

    void bump(const std::string& reason) { ++by_reason[reason]; }
    uint64_t total() const {
        uint64_t t = 0;
        for (const auto& [_, n] : by_reason) t += n;
        return t;
    }
};

namespace detail {

// Returns empty reason string when the file is retained.
inline std::string filter_reason(std::string_view content, const FilterConfig& filters) {
    if (content.find('\0') != std::string_view::npos) return "binary";
    if (!is_valid_utf8(content)) return "binary";
    if (content.size() > filters.max_bytes) return "too_large";
    if (count_lines(content) > filters.max_lines) return "too_many_lines";
    if (contains_sentinel(content)) return "sentinel_collision";
    return {};
}

inline std::vector<std::pair<std::string, std::filesystem::path>>
list_working_tree(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::vector<std::pair<std::string, fs::path>> files;
    for (auto it = fs::recursive_directory_iterator(
             root, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
        if (it->is_directory() && it->path().filename() == ".git") {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file() || it->is_symlink()) continue;
        std::string rel = fs::relative(it->path(), root).generic_string();
        files.emplace_back(std::move(rel), it->path());
    }
    return files;
}

} // namespace detail

// Scan a specific commit (or any tree-ish) of a git repository, applying the
// ingest filters. Files come back in byte-wise lexicographic path order.
inline std::vector<SourceFile> scan_git_commit(const RepoSource& source,
                                               const std::string& treeish,
                                               const FilterConfig& filters,
                                               RejectCounts& rejects) {
    validate_repo_name(source.repo_name);
    auto ls = run_command(
        {"git", "-C", source.root.string(), "ls-tree", "-r", "-z", treeish});
    if (!ls.ok()) raise(ErrorCode::git_error, "git ls-tree failed: " + ls.err);
    std::vector<std::pair<std::string, std::string>> entries; // path -> oid
    size_t pos = 0;
    while (pos < ls.out.size()) {
        size_t end = ls.out.find('\0', pos);
        if (end == std::string::npos) break;
        std::string_view rec(ls.out.data() + pos, end - pos);
        pos = end + 1;
        // "<mode> <type> <oid>\t<path>"
        size_t tab = rec.find('\t');
        if (tab == std::string_view::npos) continue;
        std::string_view meta = rec.substr(0, tab);
        std::string path(rec.substr(tab + 1));
        size_t sp1 = meta.find(' ');
        size_t sp2 = meta.find(' ', sp1 + 1);
        std::string_view mode = meta.substr(0, sp1);
        std::string_view type = meta.substr(sp1 + 1, sp2 - sp1 - 1);
        if (type != "blob" || mode == "120000") continue; // skip symlinks
        std::string oid(meta.substr(sp2 + 1));
        entries.emplace_back(std::move(path), std::move(oid));
    }
    std::sort(entries.begin(), entries.end());
    std::vector<SourceFile> out;
    for (auto& [path, oid] : entries) {
        auto cat = run_command({"git", "-C", source.root.string(), "cat-file", "blob", oid});
        if (!cat.ok()) {
            rejects.bump("unreadable");
            continue;
        }
        std::string reason = detail::filter_reason(cat.out, filters);
        if (!reason.empty()) {
            rejects.bump(reason);
            continue;
        }
        out.push_back(make_source_file(source.repo_name, path, std::move(cat.out)));
    }
    return out;
}

// Scan a repository source and emit retained files in byte-wise
// lexicographic path order. Filtered files are tallied per reject reason.
inline std::vector<SourceFile> scan_repository(const RepoSource& source,
                                               const FilterConfig& filters,
                                               RejectCounts& rejects) {
    namespace fs = std::filesystem;
    validate_repo_name(source.repo_name);
    if (!fs::exists(source.root)) {
        raise(ErrorCode::io_error, "root does not exist: " + source.root.string());
    }

    if (source.kind == RepoKind::git_repo) {
        return scan_git_commit(source, "HEAD", filters, rejects);
    }

    std::vector<SourceFile> out;
    auto files = detail::list_working_tree(source.root);
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [rel, abs] : files) {
        std::ifstream in(abs, std::ios::binary);
        if (!in) {
            rejects.bump("unreadable");
            continue;
        }
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        std::string reason = detail::filter_reason(content, filters);
        if (!reason.empty()) {
            rejects.bump(reason);
            continue;
        }
        out.push_back(make_source_file(source.repo_name, rel, std::move(content)));
    }
    return out;
}

} // namespace forge
