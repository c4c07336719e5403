#pragma once

// End-to-end pipeline driver: declarative config, per-stage runners shared
// with the CLI subcommands, a versioned run manifest, and corpus statistics.
// Every stage conserves counts (in == out + rejected) and derives its RNG
// stream from the global seed and its own name, so reruns are byte-identical.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "forge/codeflow.hpp"
#include "forge/dedup.hpp"
#include "forge/error.hpp"
#include "forge/fim.hpp"
#include "forge/hash.hpp"
#include "forge/ingest.hpp"
#include "forge/jsonl.hpp"
#include "forge/loopref.hpp"
#include "forge/pack.hpp"
#include "forge/proc.hpp"
#include "forge/rng.hpp"
#include "forge/syntax.hpp"

namespace forge {

inline constexpr std::string_view kForgeVersion = "0.1.0";
inline constexpr int kManifestSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Stage accounting
// ---------------------------------------------------------------------------

struct StageCounts {
    uint64_t in = 0;
    uint64_t out = 0;
    uint64_t rejected = 0;
    std::map<std::string, uint64_t> reasons;  // sums to `rejected`
    std::string output;                       // primary artifact path
};

struct StageRecord {
    std::string name;
    uint64_t seed = 0;
    StageCounts counts;
    uint64_t wall_ms = 0;
};

struct RunManifest {
    std::string tool_version{kForgeVersion};
    std::string config_digest;
    uint64_t seed = 0;
    std::vector<StageRecord> stages;
    bool ok = false;
    std::string failed_stage;  // empty when ok
    std::string error;         // empty when ok
};

inline Json manifest_to_json(const RunManifest& m) {
    Json stages = Json::array();
    for (const StageRecord& s : m.stages) {
        Json reasons = Json::object();
        for (const auto& [reason, n] : s.counts.reasons) reasons[reason] = n;
        stages.push_back(Json{{"name", s.name},
                              {"seed", s.seed},
                              {"in", s.counts.in},
                              {"out", s.counts.out},
                              {"rejected", s.counts.rejected},
                              {"reject_reasons", reasons},
                              {"output", s.counts.output},
                              {"wall_ms", s.wall_ms}});
    }
    return Json{{"schema_version", kManifestSchemaVersion},
                {"tool_version", m.tool_version},
                {"config_digest", m.config_digest},
                {"seed", m.seed},
                {"ok", m.ok},
                {"failed_stage", m.failed_stage},
                {"error", m.error},
                {"stages", stages}};
}

inline void validate_stage_counts(const StageCounts& counts, const std::string& stage) {
    if (counts.in != counts.out + counts.rejected) {
        raise(ErrorCode::invalid_config,
              "stage '" + stage + "' breaks count conservation: in=" +
                  std::to_string(counts.in) + " out=" + std::to_string(counts.out) +
                  " rejected=" + std::to_string(counts.rejected));
    }
    uint64_t reason_sum = 0;
    for (const auto& [_, n] : counts.reasons) reason_sum += n;
    if (reason_sum != counts.rejected) {
        raise(ErrorCode::invalid_config,
              "stage '" + stage + "' reject reasons do not sum to rejected count");
    }
}

// ---------------------------------------------------------------------------
// Stage: ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
    std::string repo_name;
    std::filesystem::path root;
    FilterConfig filters;
    std::optional<RepoKind> kind;  // unset = auto-detect on <root>/.git
};

inline StageCounts run_ingest(const IngestOptions& opts, const std::string& out_file) {
    RepoSource source;
    source.repo_name = opts.repo_name;
    source.root = opts.root;
    source.kind = opts.kind ? *opts.kind
                            : (std::filesystem::exists(opts.root / ".git") ? RepoKind::git_repo
                                                                           : RepoKind::working_tree);
    RejectCounts rejects;
    std::vector<SourceFile> files = scan_repository(source, opts.filters, rejects);

    std::vector<Json> records;
    records.reserve(files.size());
    for (const SourceFile& f : files) records.push_back(source_file_to_json(f));
    write_jsonl_file(out_file, records);

    StageCounts counts;
    counts.out = files.size();
    counts.rejected = rejects.total();
    counts.in = counts.out + counts.rejected;
    counts.reasons = rejects.by_reason;
    counts.output = out_file;
    return counts;
}

// ---------------------------------------------------------------------------
// Stage: fim
// ---------------------------------------------------------------------------

struct FimOptions {
    FimStrategy strategy = FimStrategy::random_boundary;
    std::optional<NodeLevel> level;  // required by the syntax strategy
    bool repo_level = false;
    size_t context_k = 4;
    uint64_t seed = 0;
};

inline StageCounts run_fim(const std::string& in_file, const FimOptions& opts,
                           const std::string& out_file) {
    if (opts.strategy == FimStrategy::syntax && !opts.level) {
        raise(ErrorCode::invalid_config, "syntax strategy requires a node level");
    }
    std::vector<SourceFile> files;
    for (const Json& j : read_jsonl_file(in_file)) files.push_back(source_file_from_json(j));

    StageCounts counts;
    counts.in = files.size();
    counts.output = out_file;
    std::vector<Json> records;
    for (const SourceFile& file : files) {
        Rng rng(derive_seed(opts.seed, "fim/" + file.file_id()));
        try {
            FimSpan span;
            switch (opts.strategy) {
                case FimStrategy::random_boundary:
                    span = split_random_boundary(file, rng);
                    break;
                case FimStrategy::random_line:
                    span = split_random_line(file, rng);
                    break;
                case FimStrategy::syntax:
                    span = split_syntax(file, validate_syntax(file), *opts.level, rng);
                    break;
            }
            FimSample sample = make_fim_sample(file, span);
            RenderedSample rendered;
            if (opts.repo_level) {
                sample.context = select_context_files(file, files, opts.context_k);
                if (sample.context.empty()) {
                    raise(ErrorCode::empty_repo, "no context files available for " +
                                                     file.file_id());
                }
                rendered = render_repo_level(sample);
            } else {
                rendered = render_file_level(sample);
            }
            records.push_back(fim_sample_to_json(sample, rendered));
            ++counts.out;
        } catch (const Error& e) {
            ++counts.rejected;
            ++counts.reasons[std::string(error_code_name(e.code()))];
        }
    }
    write_jsonl_file(out_file, records);
    return counts;
}

// ---------------------------------------------------------------------------
// Stage: codeflow
// ---------------------------------------------------------------------------

struct CodeflowOptions {
    std::string repo_name;
    std::filesystem::path repo_root;
    MiningConfig mining;
    uint64_t seed = 0;
};

inline StageCounts run_codeflow(const CodeflowOptions& opts, const std::string& out_file) {
    RepoSource repo;
    repo.repo_name = opts.repo_name;
    repo.root = opts.repo_root;
    repo.kind = RepoKind::git_repo;

    Rng rng(derive_seed(opts.seed, "codeflow/" + opts.repo_name));
    MiningResult result = mine_repository(repo, opts.mining, rng);
    uint64_t history_len = static_cast<uint64_t>(linearize_history(repo).size());

    std::vector<Json> records;
    records.reserve(result.triplets.size());
    for (const EvolutionTriplet& t : result.triplets) {
        records.push_back(triplet_to_json(t, lifecycle_percentile(t.start.index, history_len)));
    }
    write_jsonl_file(out_file, records);

    StageCounts counts;
    counts.out = result.triplets.size();
    counts.rejected = result.rejects.total();
    counts.in = counts.out + counts.rejected;
    counts.reasons = result.rejects.by_reason;
    counts.output = out_file;
    return counts;
}

// ---------------------------------------------------------------------------
// Stage: dedup
// ---------------------------------------------------------------------------

struct DedupOptions {
    DedupConfig config;
};

// Survivors are echoed as their original input lines, byte for byte, so the
// stage is idempotent and reruns are trivially identical.
inline StageCounts run_dedup(const std::string& in_file, const DedupOptions& opts,
                             const std::string& out_file, const std::string& report_file) {
    std::vector<std::string> lines = read_lines_file(in_file);
    std::vector<Document> docs;
    docs.reserve(lines.size());
    std::map<std::string, const std::string*> line_of;
    for (size_t i = 0; i < lines.size(); ++i) {
        Document doc = document_from_record(parse_json_line(lines[i], i + 1), i + 1);
        line_of[doc.doc_id] = &lines[i];
        docs.push_back(std::move(doc));
    }

    DedupResult result = dedup_corpus(docs, opts.config);

    std::vector<std::string> survivors;
    survivors.reserve(result.survivors.size());
    for (const Document& doc : result.survivors) survivors.push_back(*line_of.at(doc.doc_id));
    write_lines_file(out_file, survivors);

    Json exact = Json::array();
    for (const auto& [dropped, kept] : result.exact_drops) {
        exact.push_back(Json{{"dropped", dropped}, {"kept", kept}});
    }
    Json clusters = Json::array();
    for (const NearDuplicateCluster& c : result.clusters) {
        clusters.push_back(Json{{"survivor", c.survivor}, {"members", c.members}});
    }
    Json fuzzy = Json::array();
    for (const auto& [dropped, survivor] : result.fuzzy_drops) {
        fuzzy.push_back(Json{{"dropped", dropped}, {"survivor", survivor}});
    }
    Json report{{"exact_drops", exact}, {"clusters", clusters}, {"fuzzy_drops", fuzzy}};
    write_lines_file(report_file, {report.dump()});

    StageCounts counts;
    counts.in = lines.size();
    counts.out = survivors.size();
    counts.rejected = counts.in - counts.out;
    if (!result.exact_drops.empty()) {
        counts.reasons["exact_duplicate"] = result.exact_drops.size();
    }
    if (!result.fuzzy_drops.empty()) {
        counts.reasons["near_duplicate"] = result.fuzzy_drops.size();
    }
    counts.output = out_file;
    return counts;
}

// ---------------------------------------------------------------------------
// Stage: decontaminate
// ---------------------------------------------------------------------------

// Rules come either from a directory of plain-text benchmark files (one item
// per line, compiled here with n-gram length `n`) or from a compiled .json
// artifact produced by `forge decontam-compile`.
inline std::vector<ContaminationRule> load_rules(const std::filesystem::path& rules_path,
                                                 size_t n) {
    namespace fs = std::filesystem;
    if (!fs::exists(rules_path)) {
        raise(ErrorCode::io_error, "rules path does not exist: " + rules_path.string());
    }
    if (fs::is_directory(rules_path)) {
        std::vector<fs::path> sources;
        for (const auto& entry : fs::directory_iterator(rules_path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".txt") {
                sources.push_back(entry.path());
            }
        }
        std::sort(sources.begin(), sources.end());
        if (sources.empty()) {
            raise(ErrorCode::invalid_config,
                  "no .txt rule files in " + rules_path.string());
        }
        std::vector<ContaminationRule> rules;
        rules.reserve(sources.size());
        for (const fs::path& src : sources) {
            std::ifstream in(src, std::ios::binary);
            if (!in) raise(ErrorCode::io_error, "cannot read " + src.string());
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            rules.push_back(compile_rule(src.stem().string(), text, n));
        }
        return rules;
    }
    std::vector<Json> records = read_jsonl_file(rules_path.string());
    if (records.size() != 1) {
        raise(ErrorCode::bad_format, "compiled rules file must hold one JSON object");
    }
    return rules_from_json(records.front());
}

struct DecontamOptions {
    std::filesystem::path rules_path;
    size_t ngram_len = kDefaultNgramLen;
    size_t hit_min = kDefaultHitMin;
    bool excise = false;  // rewrite matched spans in place instead of dropping
};

inline StageCounts run_decontaminate(const std::vector<std::string>& in_files,
                                     const DecontamOptions& opts, const std::string& out_file,
                                     const std::string& report_file) {
    std::vector<ContaminationRule> rules = load_rules(opts.rules_path, opts.ngram_len);

    std::vector<std::string> lines;
    std::vector<Json> parsed;
    std::vector<Document> docs;
    size_t line_no = 0;
    for (const std::string& in_file : in_files) {
        for (std::string& line : read_lines_file(in_file)) {
            ++line_no;
            Json j = parse_json_line(line, line_no);
            docs.push_back(document_from_record(j, line_no));
            parsed.push_back(std::move(j));
            lines.push_back(std::move(line));
        }
    }

    DecontamResult result = decontaminate(docs, rules, opts.hit_min);
    std::set<std::string> flagged_ids;
    for (const Document& doc : result.flagged) flagged_ids.insert(doc.doc_id);

    std::vector<std::string> out_lines;
    uint64_t excised = 0;
    for (size_t i = 0; i < docs.size(); ++i) {
        const bool flagged = flagged_ids.count(docs[i].doc_id) > 0;
        if (!flagged) {
            out_lines.push_back(lines[i]);
            continue;
        }
        if (opts.excise) {
            std::string clean_text = excise_contamination(docs[i].text, rules);
            out_lines.push_back(replace_record_text(parsed[i], clean_text).dump());
            ++excised;
        }
    }
    write_lines_file(out_file, out_lines);

    Json flags = Json::array();
    for (const ContaminationFlag& f : result.flags) {
        flags.push_back(Json{{"doc_id", f.doc_id},
                             {"benchmark_name", f.benchmark_name},
                             {"matched_grams", f.matched_grams}});
    }
    Json report{{"flags", flags}, {"excised", excised}};
    write_lines_file(report_file, {report.dump()});

    StageCounts counts;
    counts.in = docs.size();
    counts.out = out_lines.size();
    counts.rejected = counts.in - counts.out;
    if (counts.rejected > 0) counts.reasons["contaminated"] = counts.rejected;
    counts.output = out_file;
    return counts;
}

// ---------------------------------------------------------------------------
// Stage: pack
// ---------------------------------------------------------------------------

struct PackOptions {
    ContextTier tier = ContextTier::ctx_32k;
    PackPolicy policy;
    PhaseRules phases;
    uint64_t seed = 0;
    std::string counter_spec = "default";  // "default" or "external:<command>"
};

inline TokenCounter make_token_counter(const std::string& spec) {
    if (spec == "default" || spec.empty()) return {};
    constexpr std::string_view prefix = "external:";
    if (spec.rfind(prefix, 0) != 0) {
        raise(ErrorCode::invalid_config, "unknown token counter '" + spec + "'");
    }
    std::string command = spec.substr(prefix.size());
    std::istringstream split(command);
    std::vector<std::string> argv;
    for (std::string word; split >> word;) argv.push_back(word);
    if (argv.empty()) {
        raise(ErrorCode::invalid_config, "external token counter command is empty");
    }
    return [argv](std::string_view text) -> size_t {
        CommandResult res = run_command(argv, text);
        if (!res.ok()) {
            raise(ErrorCode::io_error,
                  "token counter '" + argv.front() + "' exited " + std::to_string(res.exit_code));
        }
        try {
            return static_cast<size_t>(std::stoull(res.out));
        } catch (const std::exception&) {
            raise(ErrorCode::bad_format, "token counter produced non-numeric output");
        }
    };
}

inline StageCounts run_pack(const std::vector<std::string>& in_files, const PackOptions& opts,
                            const std::string& out_file, const std::string& manifest_file) {
    TokenCounter counter = make_token_counter(opts.counter_spec);

    StageCounts counts;
    std::vector<TokenizedSample> samples;
    size_t line_no = 0;
    for (const std::string& in_file : in_files) {
        for (const std::string& line : read_lines_file(in_file)) {
            ++line_no;
            ClassifiedSample rec = classify_record(parse_json_line(line, line_no), line_no);
            ++counts.in;
            if (count_tokens(rec.text, counter) == 0) {
                ++counts.rejected;
                ++counts.reasons["empty_sample"];
                continue;
            }
            samples.push_back(
                make_tokenized_sample(rec.sample_id, rec.text, rec.domain, opts.phases, counter));
        }
    }

    PackResult result = pack(samples, opts.tier, opts.policy);
    counts.rejected += result.rejected.size();
    if (!result.rejected.empty()) {
        counts.reasons["oversize"] = result.rejected.size();
    }
    counts.out = counts.in - counts.rejected;

    std::vector<PackedSequence> ordered =
        curriculum_order(result.sequences, derive_seed(opts.seed, "pack/curriculum"));

    std::vector<Json> records;
    records.reserve(ordered.size());
    for (const PackedSequence& seq : ordered) {
        Json segments = Json::array();
        for (const Segment& seg : seq.segments) {
            segments.push_back(Json{{"sample_id", seg.sample_id},
                                    {"start_token", seg.start_token},
                                    {"length", seg.length}});
        }
        MaskDescriptor mask = emit_mask(seq);
        records.push_back(Json{{"tier", std::string(tier_name(opts.tier))},
                               {"phase", seq.phase},
                               {"segments", segments},
                               {"runs", mask.runs},
                               {"fill", seq.fill}});
    }
    write_jsonl_file(out_file, records);

    Json reasons = Json::object();
    for (const auto& [reason, n] : counts.reasons) reasons[reason] = n;
    Json manifest{{"tier", std::string(tier_name(opts.tier))},
                  {"sequence_count", ordered.size()},
                  {"aggregate_fill", result.aggregate_fill},
                  {"samples_in", counts.in},
                  {"samples_packed", counts.out},
                  {"reject_counts", reasons}};
    write_lines_file(manifest_file, {manifest.dump()});

    counts.output = out_file;
    return counts;
}

// ---------------------------------------------------------------------------
// Loop-attention reference runner
// ---------------------------------------------------------------------------

struct LoopRefReport {
    Fingerprint output_fingerprint;
    bool finite_ok = false;
    bool gates_ok = false;
    bool rows_ok = false;  // attention rows are convex weightings (sum to 1)
    std::optional<bool> recompute_ok;

    bool all_ok() const {
        return finite_ok && gates_ok && rows_ok && recompute_ok.value_or(true);
    }
};

inline LoopRefReport run_loopref(const LoopConfig& config, uint64_t seed, bool check_recompute,
                                 const std::optional<std::filesystem::path>& dump_dir = {}) {
    config.validate();
    LoopWeights weights = random_weights(config, seed);
    Matrix embeddings = random_embeddings(config, seed);

    IterationState state = iteration_one(config, embeddings, weights);
    IterationTwoParts parts = iteration_two_parts(config, state, weights);

    LoopRefReport report;
    report.output_fingerprint = fingerprint(parts.output);

    report.finite_ok = true;
    for (double v : parts.output.data) {
        if (!std::isfinite(v)) report.finite_ok = false;
    }

    report.gates_ok = !parts.gates.data.empty();
    for (double g : parts.gates.data) {
        if (!(g > 0.0 && g < 1.0)) report.gates_ok = false;
    }

    // Row-normalization probe: attending over an all-ones value column must
    // return exactly weighted-average 1 at every position.
    report.rows_ok = true;
    const size_t head_dim = config.head_dim();
    Matrix q1 = matmul(embeddings, weights.wq);
    Matrix k1 = matmul(embeddings, weights.wk);
    Matrix ones(config.seq_len, 1);
    for (double& v : ones.data) v = 1.0;
    std::vector<uint8_t> mask = causal_mask(config.seq_len);
    for (size_t h = 0; h < config.n_heads; ++h) {
        Matrix probe = scaled_attention(loop_detail::head_slice(q1, h, head_dim),
                                        loop_detail::head_slice(k1, h, head_dim), ones, mask);
        for (double v : probe.data) {
            if (std::abs(v - 1.0) > 1e-9) report.rows_ok = false;
        }
    }

    if (check_recompute) {
        report.recompute_ok = verify_recompute(config, weights, embeddings);
    }

    if (dump_dir) {
        std::filesystem::create_directories(*dump_dir);
        write_tensor_file((*dump_dir / "embeddings.bin").string(), embeddings);
        write_tensor_file((*dump_dir / "output.bin").string(), parts.output);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
    uint64_t seed = 0;
    std::string out_dir = "out";
    std::vector<std::string> stages;
    std::map<std::string, std::map<std::string, std::string>> params;
    std::string raw_text;  // exact config text, digested into the manifest
};

namespace pipeline_detail {

inline std::string trim(std::string_view s) {
    size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    size_t end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

inline uint64_t parse_u64(const std::string& value, const std::string& what) {
    try {
        size_t used = 0;
        uint64_t parsed = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return parsed;
    } catch (const std::exception&) {
        raise(ErrorCode::invalid_config, what + " must be an unsigned integer, got '" + value + "'");
    }
}

inline double parse_f64(const std::string& value, const std::string& what) {
    try {
        size_t used = 0;
        double parsed = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return parsed;
    } catch (const std::exception&) {
        raise(ErrorCode::invalid_config, what + " must be a number, got '" + value + "'");
    }
}

inline bool parse_bool(const std::string& value, const std::string& what) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    raise(ErrorCode::invalid_config, what + " must be true or false, got '" + value + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::string current;
    std::istringstream in(value);
    while (std::getline(in, current, ',')) {
        std::string item = trim(current);
        if (!item.empty()) items.push_back(std::move(item));
    }
    return items;
}

inline const std::vector<std::string>& known_stages() {
    static const std::vector<std::string> stages = {"ingest",        "dedup", "fim",
                                                    "codeflow",      "pack",  "decontaminate"};
    return stages;
}

inline bool stage_known(const std::string& name) {
    const auto& stages = known_stages();
    return std::find(stages.begin(), stages.end(), name) != stages.end();
}

}  // namespace pipeline_detail

// Accepts one `key = value` assignment using the flat key-path grammar shared
// by config files and CLI overrides.
inline void apply_config_assignment(PipelineConfig& config, const std::string& key,
                                    const std::string& value, size_t line_no) {
    using pipeline_detail::split_list;
    const std::string where = "config line " + std::to_string(line_no);
    if (key.empty()) {
        raise(ErrorCode::invalid_config, where + ": empty key");
    }
    if (key == "seed") {
        config.seed = pipeline_detail::parse_u64(value, where + ": seed");
        return;
    }
    if (key == "out_dir") {
        if (value.empty()) raise(ErrorCode::invalid_config, where + ": out_dir is empty");
        config.out_dir = value;
        return;
    }
    if (key == "stages") {
        config.stages = split_list(value);
        return;
    }
    size_t dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= key.size()) {
        raise(ErrorCode::invalid_config, where + ": unknown key '" + key + "'");
    }
    config.params[key.substr(0, dot)][key.substr(dot + 1)] = value;
}

inline PipelineConfig parse_pipeline_config(const std::string& text) {
    PipelineConfig config;
    config.raw_text = text;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = pipeline_detail::trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            raise(ErrorCode::invalid_config,
                  "config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        apply_config_assignment(config, pipeline_detail::trim(stripped.substr(0, eq)),
                                pipeline_detail::trim(stripped.substr(eq + 1)), line_no);
    }
    return config;
}

inline std::string stage_param(const PipelineConfig& config, const std::string& stage,
                               const std::string& key, const std::string& fallback = {}) {
    auto stage_it = config.params.find(stage);
    if (stage_it == config.params.end()) return fallback;
    auto it = stage_it->second.find(key);
    return it == stage_it->second.end() ? fallback : it->second;
}

inline void validate_pipeline_config(const PipelineConfig& config) {
    using pipeline_detail::stage_known;
    if (config.stages.empty()) {
        raise(ErrorCode::invalid_config, "pipeline has no stages");
    }
    std::set<std::string> seen;
    for (const std::string& stage : config.stages) {
        if (!stage_known(stage)) {
            raise(ErrorCode::invalid_config, "unknown stage '" + stage + "'");
        }
        if (!seen.insert(stage).second) {
            raise(ErrorCode::invalid_config, "stage '" + stage + "' appears twice");
        }
    }
    for (const auto& [stage, _] : config.params) {
        if (!stage_known(stage)) {
            raise(ErrorCode::invalid_config, "params given for unknown stage '" + stage + "'");
        }
        if (!seen.count(stage)) {
            raise(ErrorCode::invalid_config,
                  "params given for stage '" + stage + "' which is not in the pipeline");
        }
    }

    auto position = [&](const std::string& stage) -> std::optional<size_t> {
        for (size_t i = 0; i < config.stages.size(); ++i) {
            if (config.stages[i] == stage) return i;
        }
        return std::nullopt;
    };
    auto require_before = [&](const std::string& dep, const std::string& stage) {
        auto d = position(dep);
        auto s = position(stage);
        if (!s) return;
        if (!d || *d > *s) {
            raise(ErrorCode::invalid_config,
                  "stage '" + stage + "' requires '" + dep + "' earlier in the pipeline");
        }
    };

    require_before("ingest", "fim");
    require_before("ingest", "dedup");
    if (position("decontaminate") && !position("fim") && !position("codeflow")) {
        raise(ErrorCode::invalid_config,
              "stage 'decontaminate' requires 'fim' or 'codeflow' earlier in the pipeline");
    }
    if (auto s = position("decontaminate")) {
        auto f = position("fim");
        auto c = position("codeflow");
        if ((f && *f > *s) || (c && *c > *s)) {
            raise(ErrorCode::invalid_config,
                  "stage 'decontaminate' must come after the sample producers");
        }
    }
    if (auto s = position("pack")) {
        bool has_producer = false;
        for (const std::string& producer : {"ingest", "fim", "codeflow"}) {
            auto p = position(producer);
            if (p && *p < *s) has_producer = true;
        }
        if (!has_producer) {
            raise(ErrorCode::invalid_config,
                  "stage 'pack' requires a corpus producer earlier in the pipeline");
        }
        if (auto d = position("dedup"); d && *d > *s) {
            raise(ErrorCode::invalid_config, "stage 'pack' must come after 'dedup'");
        }
        if (auto d = position("decontaminate"); d && *d > *s) {
            raise(ErrorCode::invalid_config, "stage 'pack' must come after 'decontaminate'");
        }
    }

    if (position("ingest")) {
        if (stage_param(config, "ingest", "root").empty()) {
            raise(ErrorCode::invalid_config, "stage 'ingest' requires param ingest.root");
        }
        if (stage_param(config, "ingest", "repo_name").empty()) {
            raise(ErrorCode::invalid_config, "stage 'ingest' requires param ingest.repo_name");
        }
    }
    if (position("codeflow") && stage_param(config, "codeflow", "repo").empty()) {
        raise(ErrorCode::invalid_config, "stage 'codeflow' requires param codeflow.repo");
    }
    if (position("decontaminate") && stage_param(config, "decontaminate", "rules").empty()) {
        raise(ErrorCode::invalid_config,
              "stage 'decontaminate' requires param decontaminate.rules");
    }
}

// ---------------------------------------------------------------------------
// Pipeline driver
// ---------------------------------------------------------------------------

namespace pipeline_detail {

struct ArtifactState {
    std::string corpus;                 // latest ingest/dedup output
    std::vector<std::string> samples;   // fim/codeflow outputs in stage order
    std::string decontaminated;         // decontaminate output
};

inline std::vector<std::string> pack_inputs(const ArtifactState& artifacts) {
    if (!artifacts.decontaminated.empty()) return {artifacts.decontaminated};
    if (!artifacts.samples.empty()) return artifacts.samples;
    return {artifacts.corpus};
}

}  // namespace pipeline_detail

inline StageCounts run_pipeline_stage(const PipelineConfig& config, const std::string& stage,
                                      uint64_t stage_seed,
                                      pipeline_detail::ArtifactState& artifacts) {
    namespace fs = std::filesystem;
    using pipeline_detail::parse_bool;
    using pipeline_detail::parse_f64;
    using pipeline_detail::parse_u64;
    const fs::path out_dir = config.out_dir;
    auto out_path = [&](const char* name) { return (out_dir / name).string(); };

    if (stage == "ingest") {
        IngestOptions opts;
        opts.repo_name = stage_param(config, "ingest", "repo_name");
        opts.root = stage_param(config, "ingest", "root");
        if (std::string v = stage_param(config, "ingest", "max_bytes"); !v.empty()) {
            opts.filters.max_bytes = parse_u64(v, "ingest.max_bytes");
        }
        if (std::string v = stage_param(config, "ingest", "max_lines"); !v.empty()) {
            opts.filters.max_lines = parse_u64(v, "ingest.max_lines");
        }
        if (std::string v = stage_param(config, "ingest", "source"); !v.empty()) {
            if (v == "tree") {
                opts.kind = RepoKind::working_tree;
            } else if (v == "git") {
                opts.kind = RepoKind::git_repo;
            } else {
                raise(ErrorCode::invalid_config, "ingest.source must be tree or git");
            }
        }
        StageCounts counts = run_ingest(opts, out_path("ingest.jsonl"));
        artifacts.corpus = counts.output;
        return counts;
    }

    if (stage == "fim") {
        FimOptions opts;
        opts.seed = stage_seed;
        opts.strategy =
            fim_strategy_from_name(stage_param(config, "fim", "strategy", "random_boundary"));
        if (std::string v = stage_param(config, "fim", "level"); !v.empty()) {
            opts.level = node_level_from_name(v);
        } else if (opts.strategy == FimStrategy::syntax) {
            opts.level = NodeLevel::expression;
        }
        opts.repo_level = parse_bool(stage_param(config, "fim", "repo_level", "false"),
                                     "fim.repo_level");
        if (std::string v = stage_param(config, "fim", "k"); !v.empty()) {
            opts.context_k = parse_u64(v, "fim.k");
        }
        StageCounts counts = run_fim(artifacts.corpus, opts, out_path("fim.jsonl"));
        artifacts.samples.push_back(counts.output);
        return counts;
    }

    if (stage == "codeflow") {
        CodeflowOptions opts;
        opts.seed = stage_seed;
        opts.repo_root = stage_param(config, "codeflow", "repo");
        opts.repo_name = stage_param(config, "codeflow", "repo_name",
                                     opts.repo_root.filename().string());
        if (std::string v = stage_param(config, "codeflow", "count"); !v.empty()) {
            opts.mining.count = parse_u64(v, "codeflow.count");
        }
        if (std::string v = stage_param(config, "codeflow", "min_gap"); !v.empty()) {
            opts.mining.endpoint.min_gap = parse_u64(v, "codeflow.min_gap");
        }
        if (std::string v = stage_param(config, "codeflow", "max_gap"); !v.empty()) {
            opts.mining.endpoint.max_gap = parse_u64(v, "codeflow.max_gap");
        }
        if (std::string v = stage_param(config, "codeflow", "min_lines"); !v.empty()) {
            opts.mining.endpoint.min_lines = parse_u64(v, "codeflow.min_lines");
        }
        if (std::string v = stage_param(config, "codeflow", "max_lines"); !v.empty()) {
            opts.mining.endpoint.max_lines = parse_u64(v, "codeflow.max_lines");
        }
        if (std::string v = stage_param(config, "codeflow", "scope"); !v.empty()) {
            opts.mining.scope = tree_scope_from_name(v);
        }
        StageCounts counts = run_codeflow(opts, out_path("codeflow.jsonl"));
        artifacts.samples.push_back(counts.output);
        return counts;
    }

    if (stage == "dedup") {
        DedupOptions opts;
        opts.config.seed = stage_seed;
        if (std::string v = stage_param(config, "dedup", "threshold"); !v.empty()) {
            opts.config.threshold = parse_f64(v, "dedup.threshold");
        }
        if (std::string v = stage_param(config, "dedup", "k"); !v.empty()) {
            opts.config.k = parse_u64(v, "dedup.k");
        }
        if (std::string v = stage_param(config, "dedup", "bands"); !v.empty()) {
            opts.config.bands = parse_u64(v, "dedup.bands");
        }
        if (std::string v = stage_param(config, "dedup", "rows"); !v.empty()) {
            opts.config.rows = parse_u64(v, "dedup.rows");
        }
        if (std::string v = stage_param(config, "dedup", "shingle_width"); !v.empty()) {
            opts.config.shingle_width = parse_u64(v, "dedup.shingle_width");
        }
        StageCounts counts = run_dedup(artifacts.corpus, opts, out_path("dedup.jsonl"),
                                       out_path("dedup.report.json"));
        artifacts.corpus = counts.output;
        return counts;
    }

    if (stage == "decontaminate") {
        DecontamOptions opts;
        opts.rules_path = stage_param(config, "decontaminate", "rules");
        if (std::string v = stage_param(config, "decontaminate", "n"); !v.empty()) {
            opts.ngram_len = parse_u64(v, "decontaminate.n");
        }
        if (std::string v = stage_param(config, "decontaminate", "hit_min"); !v.empty()) {
            opts.hit_min = parse_u64(v, "decontaminate.hit_min");
        }
        opts.excise = parse_bool(stage_param(config, "decontaminate", "excise", "false"),
                                 "decontaminate.excise");
        std::vector<std::string> inputs =
            artifacts.samples.empty() ? std::vector<std::string>{artifacts.corpus}
                                      : artifacts.samples;
        StageCounts counts = run_decontaminate(inputs, opts, out_path("decontaminated.jsonl"),
                                               out_path("decontam.report.json"));
        artifacts.decontaminated = counts.output;
        return counts;
    }

    if (stage == "pack") {
        PackOptions opts;
        opts.seed = stage_seed;
        opts.tier = tier_from_name(stage_param(config, "pack", "tier", "32k"));
        opts.counter_spec = stage_param(config, "pack", "counter", "default");
        if (std::string v = stage_param(config, "pack", "isolate_min"); !v.empty()) {
            opts.policy.isolate_min_length = parse_u64(v, "pack.isolate_min");
        }
        if (std::string v = stage_param(config, "pack", "oversize"); !v.empty()) {
            if (v == "reject") {
                opts.policy.oversize = OversizePolicy::reject;
            } else if (v == "error") {
                opts.policy.oversize = OversizePolicy::error;
            } else {
                raise(ErrorCode::invalid_config, "pack.oversize must be reject or error");
            }
        }
        return run_pack(pipeline_detail::pack_inputs(artifacts), opts, out_path("pack.jsonl"),
                        out_path("pack.manifest.json"));
    }

    raise(ErrorCode::invalid_config, "unknown stage '" + stage + "'");
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

// Deterministic summary of whatever artifacts exist in `dir`. No wall-clock
// data goes in, so reruns produce identical bytes.
inline Json report_stats(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path base = dir;
    Json stats = Json::object();

    if (fs::exists(base / "ingest.jsonl")) {
        std::map<std::string, uint64_t> languages;
        for (const Json& j : read_jsonl_file((base / "ingest.jsonl").string())) {
            ++languages[j.value("language", "unknown")];
        }
        Json langs = Json::object();
        for (const auto& [name, n] : languages) langs[name] = n;
        stats["languages"] = langs;
    }

    if (fs::exists(base / "fim.jsonl")) {
        std::map<std::string, uint64_t> strategies;
        for (const Json& j : read_jsonl_file((base / "fim.jsonl").string())) {
            ++strategies[j.value("strategy", "unknown")];
        }
        Json mix = Json::object();
        for (const auto& [name, n] : strategies) mix[name] = n;
        stats["fim_strategies"] = mix;
    }

    if (fs::exists(base / "codeflow.jsonl")) {
        std::vector<uint64_t> histogram(10, 0);
        for (const Json& j : read_jsonl_file((base / "codeflow.jsonl").string())) {
            double p = j.value("start_percentile", 0.0);
            size_t bucket = std::min<size_t>(static_cast<size_t>(p * 10.0), 9);
            ++histogram[bucket];
        }
        stats["triplet_percentile_histogram"] = histogram;
    }

    if (fs::exists(base / "dedup.report.json")) {
        Json report = read_jsonl_file((base / "dedup.report.json").string()).at(0);
        std::map<uint64_t, uint64_t> sizes;
        for (const Json& cluster : report.at("clusters")) {
            ++sizes[cluster.at("members").size()];
        }
        Json by_size = Json::object();
        for (const auto& [size, n] : sizes) by_size[std::to_string(size)] = n;
        stats["dedup"] = Json{{"exact_drops", report.at("exact_drops").size()},
                              {"fuzzy_drops", report.at("fuzzy_drops").size()},
                              {"cluster_sizes", by_size}};
    }

    if (fs::exists(base / "pack.jsonl")) {
        std::vector<double> fills;
        for (const Json& j : read_jsonl_file((base / "pack.jsonl").string())) {
            fills.push_back(j.value("fill", 0.0));
        }
        Json pack = Json::object();
        pack["sequence_count"] = fills.size();
        if (!fills.empty()) {
            double total = 0.0;
            for (double f : fills) total += f;
            pack["min_fill"] = *std::min_element(fills.begin(), fills.end());
            pack["max_fill"] = *std::max_element(fills.begin(), fills.end());
            pack["mean_fill"] = total / static_cast<double>(fills.size());
        }
        if (fs::exists(base / "pack.manifest.json")) {
            Json manifest = read_jsonl_file((base / "pack.manifest.json").string()).at(0);
            pack["aggregate_fill"] = manifest.at("aggregate_fill");
        }
        stats["pack"] = pack;
    }

    return stats;
}

inline RunManifest run_pipeline(const PipelineConfig& config) {
    namespace fs = std::filesystem;
    validate_pipeline_config(config);
    fs::create_directories(config.out_dir);

    RunManifest manifest;
    manifest.config_digest = digest128_hex(digest128(config.raw_text));
    manifest.seed = config.seed;

    auto write_manifest = [&] {
        write_lines_file((fs::path(config.out_dir) / "manifest.json").string(),
                         {manifest_to_json(manifest).dump(2)});
    };

    pipeline_detail::ArtifactState artifacts;
    for (const std::string& stage : config.stages) {
        StageRecord record;
        record.name = stage;
        record.seed = derive_seed(config.seed, stage);
        auto started = std::chrono::steady_clock::now();
        try {
            record.counts = run_pipeline_stage(config, stage, record.seed, artifacts);
            validate_stage_counts(record.counts, stage);
        } catch (const std::exception& e) {
            record.wall_ms = static_cast<uint64_t>(
                std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - started)
                    .count());
            manifest.stages.push_back(std::move(record));
            manifest.ok = false;
            manifest.failed_stage = stage;
            manifest.error = e.what();
            write_manifest();
            return manifest;
        }
        record.wall_ms = static_cast<uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started)
                .count());
        manifest.stages.push_back(std::move(record));
    }

    manifest.ok = true;
    write_lines_file((fs::path(config.out_dir) / "stats.json").string(),
                     {report_stats(config.out_dir).dump(2)});
    write_manifest();
    return manifest;
}

}  // namespace forge
