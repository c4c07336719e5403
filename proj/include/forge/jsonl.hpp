#pragma once

// JSONL record schemas shared by the CLI stages. Content fields carry base64
// so arbitrary bytes survive the JSON layer; objects serialize with sorted
// keys, which keeps artifact bytes deterministic.

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forge/base64.hpp"
#include "forge/codeflow.hpp"
#include "forge/dedup.hpp"
#include "forge/error.hpp"
#include "forge/fim.hpp"
#include "forge/ingest.hpp"
#include "forge/pack.hpp"

namespace forge {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

inline std::vector<std::string> read_lines_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::io_error, "cannot open '" + path + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

inline Json parse_json_line(const std::string& line, size_t line_no) {
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        raise(ErrorCode::bad_format, "line " + std::to_string(line_no) + " is not a JSON object");
    }
    return j;
}

inline std::vector<Json> read_jsonl_file(const std::string& path) {
    std::vector<Json> records;
    size_t line_no = 0;
    for (const std::string& line : read_lines_file(path)) {
        records.push_back(parse_json_line(line, ++line_no));
    }
    return records;
}

inline void write_lines_file(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot open '" + path + "' for writing");
    for (const std::string& line : lines) {
        out << line << '\n';
    }
    if (!out) raise(ErrorCode::io_error, "write to '" + path + "' failed");
}

inline void write_jsonl_file(const std::string& path, const std::vector<Json>& records) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const Json& j : records) lines.push_back(j.dump());
    write_lines_file(path, lines);
}

// ---------------------------------------------------------------------------
// Record schemas
// ---------------------------------------------------------------------------

inline Json source_file_to_json(const SourceFile& f) {
    return Json{{"repo_name", f.repo_name},
                {"path", f.path},
                {"language", std::string(language_name(f.language))},
                {"byte_len", f.byte_len},
                {"line_count", f.line_count},
                {"content_b64", base64_encode(f.content)}};
}

inline SourceFile source_file_from_json(const Json& j) {
    try {
        return make_source_file(j.at("repo_name").get<std::string>(),
                                j.at("path").get<std::string>(),
                                base64_decode(j.at("content_b64").get<std::string>()));
    } catch (const Json::exception& e) {
        raise(ErrorCode::bad_format, std::string("bad source file record: ") + e.what());
    }
}

inline Json fim_sample_to_json(const FimSample& sample, const RenderedSample& rendered) {
    Json j{{"file_id", sample.file_id},
           {"strategy", std::string(fim_strategy_name(sample.span.strategy))},
           {"span_start", sample.span.start},
           {"span_end", sample.span.end},
           {"kind", std::string(render_kind_name(rendered.kind))},
           {"text_b64", base64_encode(rendered.text)}};
    j["level"] = sample.span.level ? Json(std::string(node_level_name(*sample.span.level)))
                                   : Json(nullptr);
    return j;
}

inline Json triplet_to_json(const EvolutionTriplet& t, double start_percentile) {
    auto manifest_json = [](const SnapshotManifest& m) {
        Json files = Json::array();
        for (const auto& entry : m.files) {
            files.push_back(Json{{"path", entry.path},
                                 {"digest", digest128_hex(entry.content_digest)},
                                 {"byte_len", entry.byte_len}});
        }
        return Json{{"commit", m.commit}, {"files", files}};
    };
    return Json{{"repo_name", t.repo_name},
                {"start_hash", t.start.hash},
                {"end_hash", t.end.hash},
                {"start_percentile", start_percentile},
                {"patch_b64", base64_encode(t.patch)},
                {"old_files", manifest_json(t.old_snapshot)},
                {"new_files", manifest_json(t.new_snapshot)},
                {"stats",
                 Json{{"files_changed", t.stats.files_changed},
                      {"lines_added", t.stats.lines_added},
                      {"lines_removed", t.stats.lines_removed}}}};
}

// ---------------------------------------------------------------------------
// Corpus adapter: schema sniffing for dedup/decontaminate/pack inputs
// ---------------------------------------------------------------------------

struct ClassifiedSample {
    std::string sample_id;
    std::string text;
    SampleDomain domain = SampleDomain::generic_text;
};

// Accepts any upstream line shape: ingested source files, rendered FIM
// samples, evolution triplets, or plain {doc_id, text_b64} documents. The
// line number disambiguates ids for schemas that may repeat a natural key.
inline ClassifiedSample classify_record(const Json& j, size_t line_no) {
    try {
        ClassifiedSample out;
        if (j.contains("content_b64") && j.contains("repo_name") && j.contains("path")) {
            out.sample_id = j.at("repo_name").get<std::string>() + "/" +
                            j.at("path").get<std::string>();
            out.text = base64_decode(j.at("content_b64").get<std::string>());
            out.domain = SampleDomain::generic_text;
            return out;
        }
        if (j.contains("text_b64") && j.contains("file_id")) {
            out.sample_id = j.at("file_id").get<std::string>() + "#" + std::to_string(line_no);
            out.text = base64_decode(j.at("text_b64").get<std::string>());
            out.domain = j.value("kind", "file_level") == "repo_level" ? SampleDomain::fim_repo
                                                                       : SampleDomain::fim_file;
            return out;
        }
        if (j.contains("patch_b64") && j.contains("start_hash")) {
            out.sample_id = j.at("repo_name").get<std::string>() + "@" +
                            j.at("start_hash").get<std::string>() + ".." +
                            j.at("end_hash").get<std::string>();
            out.text = base64_decode(j.at("patch_b64").get<std::string>());
            out.domain = SampleDomain::codeflow;
            return out;
        }
        if (j.contains("doc_id") && j.contains("text_b64")) {
            out.sample_id = j.at("doc_id").get<std::string>();
            out.text = base64_decode(j.at("text_b64").get<std::string>());
            out.domain = SampleDomain::generic_text;
            return out;
        }
    } catch (const Json::exception& e) {
        raise(ErrorCode::bad_format,
              "line " + std::to_string(line_no) + ": " + std::string(e.what()));
    }
    raise(ErrorCode::bad_format,
          "line " + std::to_string(line_no) + " matches no known corpus schema");
}

inline Document document_from_record(const Json& j, size_t line_no) {
    ClassifiedSample sample = classify_record(j, line_no);
    return Document{std::move(sample.sample_id), std::move(sample.text)};
}

// Rewrites the content-bearing field of a corpus line (used by span excision).
inline Json replace_record_text(Json j, const std::string& text) {
    if (j.contains("content_b64")) {
        j["content_b64"] = base64_encode(text);
    } else if (j.contains("text_b64")) {
        j["text_b64"] = base64_encode(text);
    } else if (j.contains("patch_b64")) {
        j["patch_b64"] = base64_encode(text);
    } else {
        raise(ErrorCode::bad_format, "record has no content field to rewrite");
    }
    return j;
}

// ---------------------------------------------------------------------------
// Contamination rule serialization
// ---------------------------------------------------------------------------

inline Json rules_to_json(const std::vector<ContaminationRule>& rules) {
    Json arr = Json::array();
    for (const ContaminationRule& rule : rules) {
        Json grams = Json::array();
        for (uint64_t g : rule.ngram_set) grams.push_back(g);
        arr.push_back(Json{{"benchmark_name", rule.benchmark_name},
                           {"ngram_len", rule.ngram_len},
                           {"ngrams", grams}});
    }
    return Json{{"version", 1}, {"rules", arr}};
}

inline std::vector<ContaminationRule> rules_from_json(const Json& j) {
    std::vector<ContaminationRule> rules;
    try {
        for (const Json& r : j.at("rules")) {
            ContaminationRule rule;
            rule.benchmark_name = r.at("benchmark_name").get<std::string>();
            rule.ngram_len = r.at("ngram_len").get<size_t>();
            for (const Json& g : r.at("ngrams")) rule.ngram_set.insert(g.get<uint64_t>());
            if (rule.ngram_len == 0 || rule.ngram_set.empty()) {
                raise(ErrorCode::bad_format, "rule '" + rule.benchmark_name + "' is empty");
            }
            rules.push_back(std::move(rule));
        }
    } catch (const Json::exception& e) {
        raise(ErrorCode::bad_format, std::string("bad rules file: ") + e.what());
    }
    return rules;
}

}  // namespace forge
