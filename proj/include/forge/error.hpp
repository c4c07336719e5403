#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

// Distinguished failure conditions surfaced by library operations. CLI maps
// these to exit codes; tests assert on the code rather than message text.
enum class ErrorCode {
    io_error,
    invalid_utf8,
    file_too_short,
    too_few_lines,
    unsupported_language,
    no_node_at_level,
    sentinel_collision,
    context_path_collision,
    empty_repo,
    project_too_short,
    no_endpoint,
    apply_failed,
    git_error,
    empty_shingle_set,
    signature_mismatch,
    oversize_sample,
    unmapped_sample,
    non_finite,
    invalid_config,
    bad_format,
};

inline std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::io_error: return "io_error";
        case ErrorCode::invalid_utf8: return "invalid_utf8";
        case ErrorCode::file_too_short: return "file_too_short";
        case ErrorCode::too_few_lines: return "too_few_lines";
        case ErrorCode::unsupported_language: return "unsupported_language";
        case ErrorCode::no_node_at_level: return "no_node_at_level";
        case ErrorCode::sentinel_collision: return "sentinel_collision";
        case ErrorCode::context_path_collision: return "context_path_collision";
        case ErrorCode::empty_repo: return "empty_repo";
        case ErrorCode::project_too_short: return "project_too_short";
        case ErrorCode::no_endpoint: return "no_endpoint";
        case ErrorCode::apply_failed: return "apply_failed";
        case ErrorCode::git_error: return "git_error";
        case ErrorCode::empty_shingle_set: return "empty_shingle_set";
        case ErrorCode::signature_mismatch: return "signature_mismatch";
        case ErrorCode::oversize_sample: return "oversize_sample";
        case ErrorCode::unmapped_sample: return "unmapped_sample";
        case ErrorCode::non_finite: return "non_finite";
        case ErrorCode::invalid_config: return "invalid_config";
        case ErrorCode::bad_format: return "bad_format";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace forge
