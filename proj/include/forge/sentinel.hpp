#pragma once

#include <array>
#include <string_view>

namespace forge {

// Reserved sentinel strings used by the rendered completion templates. Any
// corpus file containing one of these verbatim is rejected at ingest so the
// rendered task structure stays unambiguous.
inline constexpr std::string_view kFimPrefix = "<|fim_prefix|>";
inline constexpr std::string_view kFimSuffix = "<|fim_suffix|>";
inline constexpr std::string_view kFimMiddle = "<|fim_middle|>";
inline constexpr std::string_view kRepoName = "<|repo_name|>";
inline constexpr std::string_view kFileSep = "<|file_sep|>";
inline constexpr std::string_view kImEnd = "<|im_end|>";

inline constexpr std::array<std::string_view, 6> kSentinels = {
    kFimPrefix, kFimSuffix, kFimMiddle, kRepoName, kFileSep, kImEnd,
};

inline bool contains_sentinel(std::string_view text) {
    for (auto s : kSentinels) {
        if (text.find(s) != std::string_view::npos) return true;
    }
    return false;
}

inline size_t count_occurrences(std::string_view text, std::string_view needle) {
    size_t count = 0;
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string_view::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

} // namespace forge
