#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>
#include <vector>

#include "forge/codeflow.hpp"

#include "helpers.hpp"

using namespace forge;
using testutil::TempDir;
using testutil::write_file;

namespace {

// Exact-rational eligibility oracle: percentile i/(N-1) in [2/5, 4/5]
// iff 5*i in [2*(N-1), 4*(N-1)].
std::vector<uint64_t> rational_eligible(uint64_t n) {
    std::vector<uint64_t> out;
    if (n <= 1) return out;
    for (uint64_t i = 0; i < n; ++i) {
        if (5 * i >= 2 * (n - 1) && 5 * i <= 4 * (n - 1)) out.push_back(i);
    }
    return out;
}

// A linear fixture repo: commit k writes content derived from k into a
// python module plus occasional extra files.
struct FixtureRepo {
    TempDir dir;
    RepoSource source;

    explicit FixtureRepo(int commits) : source{"fix", dir.path, RepoKind::git_repo} {
        testutil::git_init(dir.path);
        std::string body;
        for (int k = 0; k < commits; ++k) {
            body += "def step" + std::to_string(k) + "(x):\n";
            body += "    return x + " + std::to_string(k) + "\n";
            body += "\n";
            write_file(dir.path / "mod.py", body);
            write_file(dir.path / "README.md", "rev " + std::to_string(k) + "\n");
            testutil::git_commit_all(dir.path, "c" + std::to_string(k), 1700000000 + k * 60);
        }
    }
};

} // namespace

TEST_CASE("linearize_history indexes a linear repo", "[codeflow]") {
    FixtureRepo fix(5);
    auto history = linearize_history(fix.source);
    REQUIRE(history.size() == 5);
    for (size_t i = 0; i < 5; ++i) CHECK(history[i].index == i);
    CHECK_FALSE(history[0].parent_hash.has_value());
    CHECK(history[4].parent_hash == history[3].hash);

    // oracle: git's own first-parent listing
    auto expected = testutil::git(fix.dir.path, {"rev-list", "--first-parent",
                                                 "--reverse", "HEAD"});
    std::vector<std::string> hashes;
    size_t pos = 0;
    while (pos < expected.size()) {
        size_t nl = expected.find('\n', pos);
        if (nl == std::string::npos) break;
        hashes.push_back(expected.substr(pos, nl - pos));
        pos = nl + 1;
    }
    REQUIRE(hashes.size() == 5);
    for (size_t i = 0; i < 5; ++i) CHECK(history[i].hash == hashes[i]);
}

TEST_CASE("linearize_history follows first parents across merges", "[codeflow]") {
    TempDir tmp;
    testutil::git_init(tmp.path);
    write_file(tmp.path / "a.py", "x = 0\n");
    testutil::git_commit_all(tmp.path, "base", 1700000000);
    testutil::git(tmp.path, {"checkout", "-q", "-b", "side"});
    write_file(tmp.path / "side.py", "s = 1\n");
    testutil::git_commit_all(tmp.path, "side work", 1700000060);
    testutil::git(tmp.path, {"checkout", "-q", "main"});
    write_file(tmp.path / "a.py", "x = 1\n");
    testutil::git_commit_all(tmp.path, "main work", 1700000120);
    auto res = run_command({"env", "GIT_COMMITTER_DATE=1700000180 +0000",
                            "git", "-C", tmp.path.string(),
                            "-c", "user.name=Fixture", "-c", "user.email=f@e.c",
                            "merge", "-q", "--no-ff", "-m", "merge side", "side"});
    REQUIRE(res.ok());

    RepoSource source{"m", tmp.path, RepoKind::git_repo};
    auto history = linearize_history(source);
    auto expected = testutil::git(tmp.path, {"rev-list", "--first-parent", "--reverse", "HEAD"});
    std::vector<std::string> want;
    size_t pos = 0;
    while (pos < expected.size()) {
        size_t nl = expected.find('\n', pos);
        if (nl == std::string::npos) break;
        want.push_back(expected.substr(pos, nl - pos));
        pos = nl + 1;
    }
    REQUIRE(history.size() == want.size());
    for (size_t i = 0; i < want.size(); ++i) CHECK(history[i].hash == want[i]);
    // the side-branch commit is not in the linearization
    auto side_hash = testutil::git(tmp.path, {"rev-parse", "side"});
    side_hash.pop_back(); // newline
    for (const auto& rec : history) CHECK(rec.hash != side_hash);
}

TEST_CASE("empty repository raises empty_repo", "[codeflow]") {
    TempDir tmp;
    testutil::git_init(tmp.path);
    RepoSource source{"e", tmp.path, RepoKind::git_repo};
    CHECK_THROWS_MATCHES(linearize_history(source), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::empty_repo;
                         }));
}

TEST_CASE("lifecycle percentile arithmetic", "[codeflow]") {
    CHECK(lifecycle_percentile(0, 10) == 0.0);
    CHECK(lifecycle_percentile(9, 10) == 1.0);
    CHECK(lifecycle_percentile(4, 10) == Catch::Approx(4.0 / 9.0));
    CHECK(lifecycle_percentile(0, 1) == 0.0);
    CHECK_THROWS_AS(lifecycle_percentile(5, 5), Error);
    CHECK_THROWS_AS(lifecycle_percentile(0, 0), Error);
}

TEST_CASE("eligible start indices match the rational oracle", "[codeflow]") {
    for (uint64_t n : {1ULL, 2ULL, 3ULL, 5ULL, 6ULL, 10ULL, 11ULL, 37ULL, 100ULL, 1000ULL}) {
        CHECK(eligible_start_indices(n) == rational_eligible(n));
    }
    CHECK(eligible_start_indices(10) == std::vector<uint64_t>{4, 5, 6, 7});
    CHECK(eligible_start_indices(2).empty());
}

TEST_CASE("start selection samples the mature window", "[codeflow]") {
    std::vector<CommitRecord> history(10);
    for (uint64_t i = 0; i < 10; ++i) history[i] = {"h" + std::to_string(i), i, 0, {}};

    Rng rng(5);
    auto picked = select_start_commits(history, rng, 2);
    REQUIRE(picked.size() == 2);
    CHECK(picked[0].index < picked[1].index);
    for (const auto& c : picked) {
        double p = lifecycle_percentile(c.index, 10);
        CHECK(p >= 0.40);
        CHECK(p <= 0.80);
    }

    // clamp rule: count beyond the eligible set returns the whole set
    Rng rng2(5);
    auto all = select_start_commits(history, rng2, 99);
    REQUIRE(all.size() == 4);
    CHECK(all[0].index == 4);
    CHECK(all[3].index == 7);

    // determinism
    Rng a(7), b(7);
    auto x = select_start_commits(history, a, 3);
    auto y = select_start_commits(history, b, 3);
    REQUIRE(x.size() == y.size());
    for (size_t i = 0; i < x.size(); ++i) CHECK(x[i].hash == y[i].hash);

    std::vector<CommitRecord> two(2);
    two[0] = {"a", 0, 0, {}};
    two[1] = {"b", 1, 0, {}};
    Rng rng3(1);
    CHECK_THROWS_MATCHES(select_start_commits(two, rng3, 1), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::project_too_short;
                         }));
}

TEST_CASE("start selection is near-uniform over the window", "[codeflow]") {
    std::vector<CommitRecord> history(10);
    for (uint64_t i = 0; i < 10; ++i) history[i] = {"h" + std::to_string(i), i, 0, {}};
    std::map<uint64_t, int> counts;
    for (uint64_t seed = 0; seed < 4000; ++seed) {
        Rng rng(seed);
        counts[select_start_commits(history, rng, 1)[0].index]++;
    }
    REQUIRE(counts.size() == 4);
    for (const auto& [idx, n] : counts) {
        CHECK(n > 800);  // expected 1000 each
        CHECK(n < 1200);
    }
}

TEST_CASE("endpoint search honours gap bounds and line criteria", "[codeflow]") {
    FixtureRepo fix(12);
    auto history = linearize_history(fix.source);
    EndpointCriteria criteria;
    criteria.min_gap = 3;
    criteria.max_gap = 50;
    criteria.min_lines = 5;
    criteria.max_lines = 2000;

    // Each commit adds 3 lines to mod.py; gap 3 = 9 changed lines >= 5.
    auto end = search_endpoint(fix.source, history, history[4], criteria);
    CHECK(end.index == 7);

    // unreachable gap
    EndpointCriteria far = criteria;
    far.min_gap = 20;
    CHECK_THROWS_MATCHES(search_endpoint(fix.source, history, history[4], far), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::no_endpoint;
                         }));

    // stricter minimum lines pushes the endpoint further out
    EndpointCriteria strict = criteria;
    strict.min_lines = 16; // gap 3 yields 9+3 = 12 lines (adds + readme edits)
    auto far_end = search_endpoint(fix.source, history, history[4], strict);
    CHECK(far_end.index > 7);
}

TEST_CASE("windows with no code change yield no_endpoint", "[codeflow]") {
    TempDir tmp;
    testutil::git_init(tmp.path);
    write_file(tmp.path / "mod.py", "x = 1\n");
    write_file(tmp.path / "README.md", "v0\n");
    testutil::git_commit_all(tmp.path, "c0", 1700000000);
    for (int k = 1; k < 8; ++k) {
        std::string readme;
        for (int j = 0; j <= k; ++j) readme += "docs line " + std::to_string(j) + "\n";
        write_file(tmp.path / "README.md", readme);
        testutil::git_commit_all(tmp.path, "docs " + std::to_string(k), 1700000000 + k * 60);
    }
    RepoSource source{"docsonly", tmp.path, RepoKind::git_repo};
    auto history = linearize_history(source);
    EndpointCriteria criteria;
    criteria.min_gap = 1;
    criteria.min_lines = 1;
    CHECK_THROWS_MATCHES(search_endpoint(source, history, history[0], criteria), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::no_endpoint;
                         }));
}

TEST_CASE("build_triplet verifies the patch and fills manifests", "[codeflow]") {
    FixtureRepo fix(10);
    auto history = linearize_history(fix.source);
    auto t = build_triplet(fix.source, history[4], history[7]);

    CHECK(t.repo_name == "fix");
    CHECK(t.start.index == 4);
    CHECK(t.end.index == 7);
    CHECK(t.stats.files_changed == 2); // mod.py + README.md
    CHECK(t.stats.lines_added >= 9);
    CHECK_FALSE(t.patch.empty());

    // stats equal an independent recount
    auto recount = patch_stats(t.patch);
    CHECK(recount.files_changed == t.stats.files_changed);
    CHECK(recount.lines_added == t.stats.lines_added);
    CHECK(recount.lines_removed == t.stats.lines_removed);

    // manifests sorted, digests match content digests
    RejectCounts scratch;
    auto old_files = scan_git_commit(fix.source, t.start.hash, {}, scratch);
    TreeContents old_tree;
    for (const auto& f : old_files) old_tree[f.path] = f.content;
    for (const auto& e : t.old_snapshot.files) {
        REQUIRE(old_tree.count(e.path));
        CHECK(e.content_digest == digest128(old_tree[e.path]));
        CHECK(e.byte_len == old_tree[e.path].size());
    }
    for (size_t i = 1; i < t.old_snapshot.files.size(); ++i) {
        CHECK(t.old_snapshot.files[i - 1].path < t.old_snapshot.files[i].path);
    }

    // independent apply via system git
    testutil::TempDir work;
    for (const auto& [p, c] : old_tree) write_file(work.path / p, c);
    write_file(work.path / ".p", t.patch);
    auto res = run_command({"git", "-C", work.path.string(), "apply", ".p"});
    REQUIRE(res.ok());
    auto new_files = scan_git_commit(fix.source, t.end.hash, {}, scratch);
    for (const auto& f : new_files) {
        CHECK(testutil::read_file(work.path / f.path) == f.content);
    }
}

TEST_CASE("triplet snapshot scope: changed files plus neighbors vs full", "[codeflow]") {
    TempDir tmp;
    testutil::git_init(tmp.path);
    write_file(tmp.path / "pkg/a.py", "a = 1\n");
    write_file(tmp.path / "pkg/b.py", "b = 1\n");
    write_file(tmp.path / "other/c.py", "c = 1\n");
    testutil::git_commit_all(tmp.path, "c0", 1700000000);
    for (int k = 1; k <= 4; ++k) {
        std::string body = "a = 1\n";
        for (int j = 0; j < k * 3; ++j) body += "line_" + std::to_string(j) + " = " +
                                                std::to_string(j) + "\n";
        write_file(tmp.path / "pkg/a.py", body);
        testutil::git_commit_all(tmp.path, "c" + std::to_string(k), 1700000000 + k * 60);
    }
    RepoSource source{"scope", tmp.path, RepoKind::git_repo};
    auto history = linearize_history(source);

    auto scoped = build_triplet(source, history[0], history[3], {},
                                TreeScope::changed_plus_neighbors);
    std::set<std::string> scoped_paths;
    for (const auto& e : scoped.old_snapshot.files) scoped_paths.insert(e.path);
    CHECK(scoped_paths == std::set<std::string>{"pkg/a.py", "pkg/b.py"});

    auto full = build_triplet(source, history[0], history[3], {}, TreeScope::full);
    std::set<std::string> full_paths;
    for (const auto& e : full.old_snapshot.files) full_paths.insert(e.path);
    CHECK(full_paths == std::set<std::string>{"other/c.py", "pkg/a.py", "pkg/b.py"});
}

TEST_CASE("quality filter enforces bounds and code-language requirement", "[codeflow]") {
    EvolutionTriplet t;
    t.stats = {0, 0, 0};
    CHECK_FALSE(quality_filter(t)); // empty patch

    auto patch_for = [](const std::string& path, int lines) {
        TreeContents before = {{path, ""}};
        std::string content;
        for (int i = 0; i < lines; ++i) content += "line" + std::to_string(i) + "\n";
        TreeContents after = {{path, content}};
        return diff_trees(before, after);
    };

    EvolutionTriplet code;
    code.patch = patch_for("src/m.py", 10);
    auto s = patch_stats(code.patch);
    code.stats = {s.files_changed, s.lines_added, s.lines_removed};
    CHECK(quality_filter(code));

    EvolutionTriplet docs;
    docs.patch = patch_for("README.md", 10);
    s = patch_stats(docs.patch);
    docs.stats = {s.files_changed, s.lines_added, s.lines_removed};
    CHECK_FALSE(quality_filter(docs)); // no code-language file

    EvolutionTriplet huge;
    huge.patch = patch_for("src/m.py", 2500);
    s = patch_stats(huge.patch);
    huge.stats = {s.files_changed, s.lines_added, s.lines_removed};
    CHECK_FALSE(quality_filter(huge)); // exceeds max_changed_lines

    QualityRules wide;
    wide.max_changed_lines = 10000;
    CHECK(quality_filter(huge, wide));

    EvolutionTriplet tiny;
    tiny.patch = patch_for("src/m.py", 2);
    s = patch_stats(tiny.patch);
    tiny.stats = {s.files_changed, s.lines_added, s.lines_removed};
    CHECK_FALSE(quality_filter(tiny)); // below min_changed_lines
}

TEST_CASE("mine_repository is deterministic and self-verifying", "[codeflow]") {
    FixtureRepo fix(14);
    MiningConfig config;
    config.count = 3;

    Rng rng1(99);
    auto r1 = mine_repository(fix.source, config, rng1);
    Rng rng2(99);
    auto r2 = mine_repository(fix.source, config, rng2);

    REQUIRE(!r1.triplets.empty());
    REQUIRE(r1.triplets.size() == r2.triplets.size());
    for (size_t i = 0; i < r1.triplets.size(); ++i) {
        CHECK(r1.triplets[i].start.hash == r2.triplets[i].start.hash);
        CHECK(r1.triplets[i].end.hash == r2.triplets[i].end.hash);
        CHECK(r1.triplets[i].patch == r2.triplets[i].patch);
    }
    // sorted by start.index; eligibility invariant
    uint64_t total = linearize_history(fix.source).size();
    for (size_t i = 0; i < r1.triplets.size(); ++i) {
        const auto& t = r1.triplets[i];
        if (i > 0) CHECK(t.start.index > r1.triplets[i - 1].start.index);
        double p = lifecycle_percentile(t.start.index, total);
        CHECK(p >= 0.40);
        CHECK(p <= 0.80);
        CHECK(t.start.index < t.end.index);
    }
}
