#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "forge/proc.hpp"

namespace testutil {

// Self-deleting temporary directory.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "forge-test-XXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
        path = buf.data();
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline void write_file(const std::filesystem::path& p, std::string_view content) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Run git in `dir`, throwing on failure: fixture setup must not silently
// produce a broken repo.
inline std::string git(const std::filesystem::path& dir, std::vector<std::string> args,
                       std::string_view input = {}) {
    std::vector<std::string> argv = {"git", "-C", dir.string()};
    for (auto& a : args) argv.push_back(std::move(a));
    auto res = forge::run_command(argv, input);
    if (!res.ok()) {
        throw std::runtime_error("git failed (" + std::to_string(res.exit_code) + "): " + res.err);
    }
    return res.out;
}

// Initialise a git repo with deterministic author/committer identity.
inline void git_init(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    git(dir, {"init", "-q", "-b", "main"});
    git(dir, {"config", "user.name", "Fixture"});
    git(dir, {"config", "user.email", "fixture@example.com"});
    git(dir, {"config", "commit.gpgsign", "false"});
}

inline void git_commit_all(const std::filesystem::path& dir, const std::string& message,
                           int timestamp) {
    git(dir, {"add", "-A"});
    std::string stamp = std::to_string(timestamp) + " +0000";
    auto res = forge::run_command({"env", "GIT_COMMITTER_DATE=" + stamp,
                                   "git", "-C", dir.string(),
                                   "-c", "user.name=Fixture",
                                   "-c", "user.email=fixture@example.com",
                                   "commit", "-q", "--allow-empty", "-m", message,
                                   "--date", stamp});
    if (!res.ok()) throw std::runtime_error("git commit failed: " + res.err);
}

} // namespace testutil
