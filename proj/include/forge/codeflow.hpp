#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "forge/diff.hpp"
#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/ingest.hpp"
#include "forge/lang.hpp"
#include "forge/rng.hpp"

// Repository-evolution mining: select mature start commits by lifecycle
// percentile, search forward for endpoints bounding a meaningful development
// window, and emit (R_old, P, R_new) triplets whose patch is verified to
// transform the old tree into the new one byte-exactly before anything is
// written out.

namespace forge {

struct CommitRecord {
    std::string hash;
    uint64_t index = 0; // position in linearized first-parent history, 0 = root
    int64_t timestamp = 0;
    std::optional<std::string> parent_hash;

    bool operator==(const CommitRecord&) const = default;
};

struct SnapshotManifest {
    struct Entry {
        std::string path;
        Digest128 content_digest;
        uint64_t byte_len = 0;

        bool operator==(const Entry&) const = default;
    };
    std::string commit;
    std::vector<Entry> files; // unique paths, sorted lexicographically

    bool operator==(const SnapshotManifest&) const = default;
};

struct TripletStats {
    uint64_t files_changed = 0;
    uint64_t lines_added = 0;
    uint64_t lines_removed = 0;

    bool operator==(const TripletStats&) const = default;
};

struct EvolutionTriplet {
    std::string repo_name;
    CommitRecord start;
    CommitRecord end;
    SnapshotManifest old_snapshot;
    std::string patch; // unified diff old -> new
    SnapshotManifest new_snapshot;
    TripletStats stats;
};

// ---------------------------------------------------------------- history --

// First-parent chain from the initial commit to HEAD, index ascending.
inline std::vector<CommitRecord> linearize_history(const RepoSource& repo) {
    auto res = run_command({"git", "-C", repo.root.string(), "log", "--first-parent",
                            "--reverse", "--format=%H %ct %P", "HEAD"});
    if (!res.ok()) {
        // A repo with no commits makes git log fail.
        if (res.err.find("does not have any commits") != std::string::npos ||
            res.err.find("bad default revision") != std::string::npos ||
            res.err.find("unknown revision") != std::string::npos) {
            raise(ErrorCode::empty_repo, "repository has no commits: " + repo.root.string());
        }
        raise(ErrorCode::git_error, "git log failed: " + res.err);
    }
    std::vector<CommitRecord> out;
    std::istringstream in(res.out);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        CommitRecord rec;
        std::string parents;
        ls >> rec.hash >> rec.timestamp;
        std::string p;
        if (ls >> p) rec.parent_hash = p; // first parent only
        rec.index = out.size();
        out.push_back(std::move(rec));
    }
    if (out.empty()) raise(ErrorCode::empty_repo, "repository has no commits");
    return out;
}

// -------------------------------------------------------------- lifecycle --

// Position of a commit within the project lifecycle as a fraction of the
// linearized history; a single-commit project sits at 0.
inline double lifecycle_percentile(uint64_t index, uint64_t total) {
    if (total == 0 || index >= total) {
        raise(ErrorCode::invalid_config, "percentile requires 0 <= index < total");
    }
    if (total == 1) return 0.0;
    return static_cast<double>(index) / static_cast<double>(total - 1);
}

inline constexpr double kLifecycleLow = 0.40;
inline constexpr double kLifecycleHigh = 0.80;

inline std::vector<uint64_t> eligible_start_indices(uint64_t total) {
    std::vector<uint64_t> out;
    for (uint64_t i = 0; i < total; ++i) {
        double p = lifecycle_percentile(i, total);
        if (p >= kLifecycleLow && p <= kLifecycleHigh) out.push_back(i);
    }
    return out;
}

// Uniform sample without replacement from the mature window, returned in
// ascending index order. count >= |eligible| returns the whole window.
inline std::vector<CommitRecord> select_start_commits(const std::vector<CommitRecord>& history,
                                                      Rng& rng, uint64_t count) {
    auto eligible = eligible_start_indices(history.size());
    if (eligible.empty()) {
        raise(ErrorCode::project_too_short,
              "no commit falls inside the mature lifecycle window");
    }
    if (count < eligible.size()) {
        rng.shuffle(eligible);
        eligible.resize(count);
        std::sort(eligible.begin(), eligible.end());
    }
    std::vector<CommitRecord> out;
    out.reserve(eligible.size());
    for (uint64_t i : eligible) out.push_back(history[i]);
    return out;
}

// --------------------------------------------------------------- endpoint --

struct EndpointCriteria {
    uint64_t min_gap = 3;
    uint64_t max_gap = 50;
    uint64_t min_lines = 5;    // total changed lines, added + removed
    uint64_t max_lines = 2000;
};

namespace codeflow_detail {

inline TreeContents tree_contents(const std::vector<SourceFile>& files) {
    TreeContents out;
    for (const auto& f : files) out[f.path] = f.content;
    return out;
}

inline bool is_code_path(const std::string& path) {
    return detect_language(path, "") != Language::unknown;
}

} // namespace codeflow_detail

// Earliest commit within the gap window whose cumulative diff against the
// start commit changes at least one code-language file and lands inside the
// changed-line bounds. The diff is computed over ingest-filtered trees, the
// same basis later used by build_triplet.
inline CommitRecord search_endpoint(const RepoSource& repo,
                                    const std::vector<CommitRecord>& history,
                                    const CommitRecord& start, const EndpointCriteria& criteria,
                                    const FilterConfig& filters = {}) {
    if (start.index + 1 >= history.size()) {
        raise(ErrorCode::no_endpoint, "start commit has no successors");
    }
    RejectCounts scratch;
    auto old_tree = codeflow_detail::tree_contents(
        scan_git_commit(repo, start.hash, filters, scratch));
    for (uint64_t gap = std::max<uint64_t>(criteria.min_gap, 1); gap <= criteria.max_gap; ++gap) {
        uint64_t idx = start.index + gap;
        if (idx >= history.size()) break;
        const CommitRecord& candidate = history[idx];
        auto new_tree = codeflow_detail::tree_contents(
            scan_git_commit(repo, candidate.hash, filters, scratch));
        std::string patch = diff_trees(old_tree, new_tree);
        if (patch.empty()) continue;
        DiffStats stats = patch_stats(patch);
        uint64_t total_lines = stats.lines_added + stats.lines_removed;
        if (total_lines < criteria.min_lines || total_lines > criteria.max_lines) continue;
        bool code_changed = false;
        for (const auto& p : patch_changed_paths(patch)) {
            code_changed = code_changed || codeflow_detail::is_code_path(p);
        }
        if (!code_changed) continue;
        return candidate;
    }
    raise(ErrorCode::no_endpoint,
          "no endpoint satisfies the criteria for start " + start.hash);
}

// ---------------------------------------------------------------- triplet --

// Which files the serialized snapshots enumerate.
enum class TreeScope {
    changed_plus_neighbors, // changed files and files sharing their directories
    full,                   // the whole retained tree
};

inline TreeScope tree_scope_from_name(std::string_view name) {
    if (name == "changed" || name == "changed_plus_neighbors") {
        return TreeScope::changed_plus_neighbors;
    }
    if (name == "full") return TreeScope::full;
    raise(ErrorCode::invalid_config, "unknown tree scope: " + std::string(name));
}

namespace codeflow_detail {

inline std::string dir_of(const std::string& path) {
    size_t slash = path.rfind('/');
    return slash == std::string::npos ? std::string() : path.substr(0, slash);
}

inline SnapshotManifest make_manifest(const std::string& commit, const TreeContents& tree,
                                      const std::set<std::string>& changed, TreeScope scope) {
    SnapshotManifest m;
    m.commit = commit;
    std::set<std::string> changed_dirs;
    for (const auto& p : changed) changed_dirs.insert(dir_of(p));
    for (const auto& [path, content] : tree) {
        bool include = scope == TreeScope::full || changed.count(path) ||
                       changed_dirs.count(dir_of(path));
        if (!include) continue;
        m.files.push_back({path, digest128(content), content.size()});
    }
    return m; // TreeContents iterates sorted, so files are sorted and unique
}

} // namespace codeflow_detail

// Build one verified triplet. The patch is applied back to the old tree and
// the result compared byte-exactly against the new tree before returning;
// any mismatch raises apply_failed (an internal-consistency bug, counted and
// suppressed by callers rather than emitted).
inline EvolutionTriplet build_triplet(const RepoSource& repo, const CommitRecord& start,
                                      const CommitRecord& end,
                                      const FilterConfig& filters = {},
                                      TreeScope scope = TreeScope::changed_plus_neighbors) {
    if (start.index >= end.index) {
        raise(ErrorCode::invalid_config, "triplet requires start.index < end.index");
    }
    RejectCounts scratch;
    auto old_tree = codeflow_detail::tree_contents(
        scan_git_commit(repo, start.hash, filters, scratch));
    auto new_tree = codeflow_detail::tree_contents(
        scan_git_commit(repo, end.hash, filters, scratch));

    EvolutionTriplet t;
    t.repo_name = repo.repo_name;
    t.start = start;
    t.end = end;
    t.patch = diff_trees(old_tree, new_tree);

    TreeContents rebuilt = apply_patch(old_tree, t.patch);
    if (rebuilt != new_tree) {
        raise(ErrorCode::apply_failed,
              "patch application did not reproduce the new tree for " + repo.repo_name);
    }

    std::set<std::string> changed;
    for (const auto& p : patch_changed_paths(t.patch)) changed.insert(p);
    t.old_snapshot = codeflow_detail::make_manifest(start.hash, old_tree, changed, scope);
    t.new_snapshot = codeflow_detail::make_manifest(end.hash, new_tree, changed, scope);
    DiffStats stats = patch_stats(t.patch);
    t.stats = {stats.files_changed, stats.lines_added, stats.lines_removed};
    return t;
}

// ---------------------------------------------------------------- quality --

struct QualityRules {
    uint64_t min_changed_lines = 5;
    uint64_t max_changed_lines = 2000;
    uint64_t max_files_changed = 100;
};

inline bool quality_filter(const EvolutionTriplet& t, const QualityRules& rules = {}) {
    if (t.stats.files_changed == 0) return false; // empty patch
    if (t.stats.files_changed > rules.max_files_changed) return false;
    uint64_t lines = t.stats.lines_added + t.stats.lines_removed;
    if (lines < rules.min_changed_lines || lines > rules.max_changed_lines) return false;
    for (const auto& p : patch_changed_paths(t.patch)) {
        if (codeflow_detail::is_code_path(p)) return true;
    }
    return false;
}

// ----------------------------------------------------------------- mining --

struct MiningConfig {
    uint64_t count = 8; // start commits to draw
    EndpointCriteria endpoint;
    QualityRules quality;
    FilterConfig filters;
    TreeScope scope = TreeScope::changed_plus_neighbors;
};

struct MiningResult {
    std::vector<EvolutionTriplet> triplets; // sorted by start.index
    RejectCounts rejects;                   // no_endpoint / quality / apply_failed
};

inline MiningResult mine_repository(const RepoSource& repo, const MiningConfig& config,
                                    Rng& rng) {
    MiningResult result;
    auto history = linearize_history(repo);
    std::vector<CommitRecord> starts;
    try {
        starts = select_start_commits(history, rng, config.count);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::project_too_short) throw;
        result.rejects.bump("project_too_short");
        return result;
    }
    for (const auto& start : starts) {
        CommitRecord end;
        try {
            end = search_endpoint(repo, history, start, config.endpoint, config.filters);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::no_endpoint) throw;
            result.rejects.bump("no_endpoint");
            continue;
        }
        EvolutionTriplet t;
        try {
            t = build_triplet(repo, start, end, config.filters, config.scope);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::apply_failed) throw;
            result.rejects.bump("apply_failed");
            continue;
        }
        if (!quality_filter(t, config.quality)) {
            result.rejects.bump("quality");
            continue;
        }
        result.triplets.push_back(std::move(t));
    }
    return result;
}

} // namespace forge
