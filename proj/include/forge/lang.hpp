#pragma once

#include <string>
#include <string_view>

namespace forge {

// Corpus languages with an embedded grammar. Everything else is `unknown`
// and flows through the heuristic-only splitting path.
enum class Language { python, java, typescript, csharp, unknown };

inline std::string_view language_name(Language lang) {
    switch (lang) {
        case Language::python: return "python";
        case Language::java: return "java";
        case Language::typescript: return "typescript";
        case Language::csharp: return "csharp";
        case Language::unknown: return "unknown";
    }
    return "unknown";
}

inline Language language_from_name(std::string_view name) {
    if (name == "python") return Language::python;
    if (name == "java") return Language::java;
    if (name == "typescript") return Language::typescript;
    if (name == "csharp") return Language::csharp;
    return Language::unknown;
}

namespace detail {

inline std::string_view path_basename(std::string_view path) {
    size_t slash = path.find_last_of('/');
    return slash == std::string_view::npos ? path : path.substr(slash + 1);
}

inline std::string_view path_extension(std::string_view path) {
    std::string_view base = path_basename(path);
    size_t dot = base.find_last_of('.');
    if (dot == std::string_view::npos || dot == 0) return {};
    return base.substr(dot + 1);
}

} // namespace detail

// Deterministic mapping by extension. For extensionless files only, a
// shebang sniff on the first line resolves interpreter scripts; anything
// else is `unknown`.
inline Language detect_language(std::string_view path, std::string_view content) {
    std::string_view ext = detail::path_extension(path);
    if (!ext.empty()) {
        if (ext == "py" || ext == "pyi") return Language::python;
        if (ext == "java") return Language::java;
        if (ext == "ts" || ext == "tsx") return Language::typescript;
        if (ext == "cs") return Language::csharp;
        return Language::unknown;
    }
    // Extensionless fallback: shebang interpreter names only.
    if (content.substr(0, 2) == "#!") {
        size_t eol = content.find('\n');
        std::string_view line = content.substr(0, eol == std::string_view::npos ? content.size() : eol);
        if (line.find("python") != std::string_view::npos) return Language::python;
    }
    return Language::unknown;
}

} // namespace forge
