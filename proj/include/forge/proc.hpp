#pragma once

#include <cerrno>
#include <cstring>
#include <string>
#include <vector>

#include <csignal>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "forge/error.hpp"

namespace forge {

struct CommandResult {
    int exit_code = -1;
    std::string out; // raw bytes
    std::string err;

    bool ok() const { return exit_code == 0; }
};

// Run a command without a shell, feeding `input` on stdin and capturing
// stdout/stderr binary-safe. argv[0] is resolved via PATH. I/O is
// interleaved with poll() so large writes cannot deadlock against large
// reads.
inline CommandResult run_command(const std::vector<std::string>& argv,
                                 std::string_view input = {}) {
    if (argv.empty()) raise(ErrorCode::invalid_config, "empty command");

    // A child exiting before consuming stdin must not kill us via SIGPIPE;
    // the write() then fails with EPIPE and we stop feeding.
    static const bool sigpipe_ignored = [] {
        signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;

    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
        raise(ErrorCode::io_error, "pipe() failed");
    }

    pid_t pid = fork();
    if (pid < 0) raise(ErrorCode::io_error, "fork() failed");

    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(in_pipe[0]); close(in_pipe[1]);
        close(out_pipe[0]); close(out_pipe[1]);
        close(err_pipe[0]); close(err_pipe[1]);
        std::vector<char*> args;
        args.reserve(argv.size() + 1);
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        execvp(args[0], args.data());
        _exit(127);
    }

    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);

    int in_fd = in_pipe[1];
    int out_fd = out_pipe[0];
    int err_fd = err_pipe[0];
    if (input.empty()) {
        close(in_fd);
        in_fd = -1;
    }

    CommandResult result;
    size_t written = 0;
    char buf[65536];
    while (in_fd >= 0 || out_fd >= 0 || err_fd >= 0) {
        pollfd fds[3];
        int n = 0;
        int idx_in = -1, idx_out = -1, idx_err = -1;
        if (in_fd >= 0) { idx_in = n; fds[n++] = {in_fd, POLLOUT, 0}; }
        if (out_fd >= 0) { idx_out = n; fds[n++] = {out_fd, POLLIN, 0}; }
        if (err_fd >= 0) { idx_err = n; fds[n++] = {err_fd, POLLIN, 0}; }
        if (poll(fds, static_cast<nfds_t>(n), -1) < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
            ssize_t w = write(in_fd, input.data() + written, input.size() - written);
            if (w > 0) written += static_cast<size_t>(w);
            if (w < 0 || written == input.size()) {
                close(in_fd);
                in_fd = -1;
            }
        }
        auto pump = [&](int& fd, int idx, std::string& sink) {
            if (idx < 0 || fd < 0) return;
            if (!(fds[idx].revents & (POLLIN | POLLERR | POLLHUP))) return;
            ssize_t r = read(fd, buf, sizeof(buf));
            if (r > 0) {
                sink.append(buf, static_cast<size_t>(r));
            } else if (r == 0 || (r < 0 && errno != EINTR)) {
                close(fd);
                fd = -1;
            }
        };
        pump(out_fd, idx_out, result.out);
        pump(err_fd, idx_err, result.err);
    }
    if (in_fd >= 0) close(in_fd);
    if (out_fd >= 0) close(out_fd);
    if (err_fd >= 0) close(err_fd);

    int status = 0;
    waitpid(pid, &status, 0);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

} // namespace forge
