#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "forge/error.hpp"
#include "forge/pipeline.hpp"

namespace {

int exit_code_for(const forge::Error& e) {
    switch (e.code()) {
        case forge::ErrorCode::invalid_config:
        case forge::ErrorCode::bad_format:
            return 1;
        default:
            return 2;
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        forge::raise(forge::ErrorCode::io_error, "cannot open '" + path + "'");
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void print_counts(const char* stage, const forge::StageCounts& counts) {
    std::printf("%s: in=%llu out=%llu rejected=%llu\n", stage,
                static_cast<unsigned long long>(counts.in),
                static_cast<unsigned long long>(counts.out),
                static_cast<unsigned long long>(counts.rejected));
    for (const auto& [reason, n] : counts.reasons) {
        std::printf("  reject %s: %llu\n", reason.c_str(), static_cast<unsigned long long>(n));
    }
    if (!counts.output.empty()) {
        std::printf("  wrote %s\n", counts.output.c_str());
    }
}

struct IngestArgs {
    std::string root;
    std::string repo_name;
    std::string out;
    std::optional<uint64_t> max_bytes;
    std::optional<uint64_t> max_lines;
    std::string source;
};

struct FimArgs {
    std::string in;
    std::string out;
    std::string strategy = "random_boundary";
    std::string level;
    bool repo_level = false;
    uint64_t k = 4;
    uint64_t seed = 0;
};

struct CodeflowArgs {
    std::string repo;
    std::string repo_name;
    std::string out;
    uint64_t count = 8;
    uint64_t seed = 0;
    std::optional<uint64_t> min_gap;
    std::optional<uint64_t> max_gap;
    std::optional<uint64_t> min_lines;
    std::optional<uint64_t> max_lines;
    std::string scope;
};

struct DedupArgs {
    std::string in;
    std::string out;
    std::string report;
    double threshold = forge::kDefaultDedupThreshold;
    uint64_t k = forge::kDefaultMinhashK;
    uint64_t bands = forge::kDefaultLshBands;
    uint64_t rows = forge::kDefaultLshRows;
    uint64_t shingle_width = forge::kDefaultShingleWidth;
    uint64_t seed = 0;
};

struct CompileArgs {
    std::string rules;
    std::string out;
    uint64_t n = forge::kDefaultNgramLen;
};

struct DecontamArgs {
    std::vector<std::string> in;
    std::string rules;
    std::string out;
    std::string report;
    uint64_t n = forge::kDefaultNgramLen;
    uint64_t hit_min = forge::kDefaultHitMin;
    bool excise = false;
};

struct PackArgs {
    std::vector<std::string> in;
    std::string out;
    std::string manifest;
    std::string tier = "32k";
    std::string counter = "default";
    std::string oversize = "reject";
    std::optional<uint64_t> isolate_min;
    uint64_t seed = 0;
};

struct LoopArgs {
    uint64_t seq_len = 4;
    uint64_t d_model = 16;
    uint64_t heads = 2;
    uint64_t seed = 0;
    bool check_recompute = false;
    std::string dump;
};

struct RunArgs {
    std::string config;
    std::optional<uint64_t> seed;
    std::string out_dir;
    std::vector<std::string> sets;
};

int cmd_ingest(const IngestArgs& args) {
    forge::IngestOptions opts;
    opts.repo_name = args.repo_name;
    opts.root = args.root;
    if (args.max_bytes) opts.filters.max_bytes = *args.max_bytes;
    if (args.max_lines) opts.filters.max_lines = *args.max_lines;
    if (!args.source.empty()) {
        if (args.source == "tree") {
            opts.kind = forge::RepoKind::working_tree;
        } else if (args.source == "git") {
            opts.kind = forge::RepoKind::git_repo;
        } else {
            forge::raise(forge::ErrorCode::invalid_config, "--source must be tree or git");
        }
    }
    print_counts("ingest", forge::run_ingest(opts, args.out));
    return 0;
}

int cmd_fim(const FimArgs& args) {
    forge::FimOptions opts;
    opts.strategy = forge::fim_strategy_from_name(args.strategy);
    if (!args.level.empty()) {
        opts.level = forge::node_level_from_name(args.level);
    } else if (opts.strategy == forge::FimStrategy::syntax) {
        opts.level = forge::NodeLevel::expression;
    }
    opts.repo_level = args.repo_level;
    opts.context_k = args.k;
    opts.seed = args.seed;
    print_counts("fim", forge::run_fim(args.in, opts, args.out));
    return 0;
}

int cmd_codeflow(const CodeflowArgs& args) {
    forge::CodeflowOptions opts;
    opts.repo_root = args.repo;
    opts.repo_name = args.repo_name.empty()
                         ? std::filesystem::path(args.repo).filename().string()
                         : args.repo_name;
    opts.seed = args.seed;
    opts.mining.count = args.count;
    if (args.min_gap) opts.mining.endpoint.min_gap = *args.min_gap;
    if (args.max_gap) opts.mining.endpoint.max_gap = *args.max_gap;
    if (args.min_lines) opts.mining.endpoint.min_lines = *args.min_lines;
    if (args.max_lines) opts.mining.endpoint.max_lines = *args.max_lines;
    if (!args.scope.empty()) opts.mining.scope = forge::tree_scope_from_name(args.scope);
    print_counts("codeflow", forge::run_codeflow(opts, args.out));
    return 0;
}

int cmd_dedup(const DedupArgs& args) {
    forge::DedupOptions opts;
    opts.config.threshold = args.threshold;
    opts.config.k = args.k;
    opts.config.bands = args.bands;
    opts.config.rows = args.rows;
    opts.config.shingle_width = args.shingle_width;
    opts.config.seed = args.seed;
    std::string report = args.report.empty() ? args.out + ".report.json" : args.report;
    print_counts("dedup", forge::run_dedup(args.in, opts, args.out, report));
    return 0;
}

int cmd_decontam_compile(const CompileArgs& args) {
    std::vector<forge::ContaminationRule> rules = forge::load_rules(args.rules, args.n);
    forge::write_lines_file(args.out, {forge::rules_to_json(rules).dump()});
    std::printf("decontam-compile: %zu rules -> %s\n", rules.size(), args.out.c_str());
    return 0;
}

int cmd_decontaminate(const DecontamArgs& args) {
    forge::DecontamOptions opts;
    opts.rules_path = args.rules;
    opts.ngram_len = args.n;
    opts.hit_min = args.hit_min;
    opts.excise = args.excise;
    std::string report = args.report.empty() ? args.out + ".report.json" : args.report;
    print_counts("decontaminate", forge::run_decontaminate(args.in, opts, args.out, report));
    return 0;
}

int cmd_pack(const PackArgs& args) {
    forge::PackOptions opts;
    opts.tier = forge::tier_from_name(args.tier);
    opts.seed = args.seed;
    opts.counter_spec = args.counter;
    if (args.isolate_min) opts.policy.isolate_min_length = *args.isolate_min;
    if (args.oversize == "reject") {
        opts.policy.oversize = forge::OversizePolicy::reject;
    } else if (args.oversize == "error") {
        opts.policy.oversize = forge::OversizePolicy::error;
    } else {
        forge::raise(forge::ErrorCode::invalid_config, "--oversize must be reject or error");
    }
    std::string manifest = args.manifest.empty() ? args.out + ".manifest.json" : args.manifest;
    print_counts("pack", forge::run_pack(args.in, opts, args.out, manifest));
    return 0;
}

int cmd_loopref(const LoopArgs& args) {
    forge::LoopConfig config;
    config.seq_len = args.seq_len;
    config.d_model = args.d_model;
    config.n_heads = args.heads;
    std::optional<std::filesystem::path> dump;
    if (!args.dump.empty()) dump = args.dump;
    forge::LoopRefReport report =
        forge::run_loopref(config, args.seed, args.check_recompute, dump);

    std::printf("fingerprint %016llx\n",
                static_cast<unsigned long long>(report.output_fingerprint.digest));
    std::printf("finite %s\n", report.finite_ok ? "ok" : "FAIL");
    std::printf("gates %s\n", report.gates_ok ? "ok" : "FAIL");
    std::printf("rows %s\n", report.rows_ok ? "ok" : "FAIL");
    if (report.recompute_ok) {
        std::printf("recompute %s\n", *report.recompute_ok ? "ok" : "FAIL");
    }
    std::printf("invariants %s\n", report.all_ok() ? "pass" : "FAIL");
    return report.all_ok() ? 0 : 2;
}

int cmd_run(const RunArgs& args) {
    std::string text = read_text_file(args.config);
    for (const std::string& assignment : args.sets) {
        text += "\n" + assignment;
    }
    if (args.seed) text += "\nseed = " + std::to_string(*args.seed);
    if (!args.out_dir.empty()) text += "\nout_dir = " + args.out_dir;

    forge::PipelineConfig config = forge::parse_pipeline_config(text);
    forge::RunManifest manifest = forge::run_pipeline(config);
    for (const forge::StageRecord& stage : manifest.stages) {
        std::printf("stage %s: in=%llu out=%llu rejected=%llu (%llu ms)\n", stage.name.c_str(),
                    static_cast<unsigned long long>(stage.counts.in),
                    static_cast<unsigned long long>(stage.counts.out),
                    static_cast<unsigned long long>(stage.counts.rejected),
                    static_cast<unsigned long long>(stage.wall_ms));
    }
    std::printf("manifest %s\n",
                (std::filesystem::path(config.out_dir) / "manifest.json").string().c_str());
    if (!manifest.ok) {
        std::fprintf(stderr, "error: stage '%s' failed: %s\n", manifest.failed_stage.c_str(),
                     manifest.error.c_str());
        return 2;
    }
    std::printf("ok\n");
    return 0;
}

int cmd_stats(const std::string& dir) {
    std::printf("%s\n", forge::report_stats(dir).dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"code-flow forge: corpus engineering toolkit"};
    app.require_subcommand(0, 1);

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "Scan a repository into a JSONL corpus");
    ingest->add_option("--root", ingest_args.root, "Repository root directory")->required();
    ingest->add_option("--repo-name", ingest_args.repo_name, "Logical repository name")
        ->required();
    ingest->add_option("--out", ingest_args.out, "Output JSONL path")->required();
    ingest->add_option("--max-bytes", ingest_args.max_bytes, "Per-file size cap");
    ingest->add_option("--max-lines", ingest_args.max_lines, "Per-file line cap");
    ingest->add_option("--source", ingest_args.source, "Force source kind: tree or git");

    FimArgs fim_args;
    auto* fim = app.add_subcommand("fim", "Synthesize fill-in-the-middle samples");
    fim->add_option("--in", fim_args.in, "Ingested corpus JSONL")->required();
    fim->add_option("--strategy", fim_args.strategy,
                    "random_boundary, random_line, or syntax");
    fim->add_option("--level", fim_args.level, "Node level for the syntax strategy");
    fim->add_flag("--repo-level", fim_args.repo_level, "Render with repository context");
    fim->add_option("--k", fim_args.k, "Context files for repo-level rendering");
    fim->add_option("--seed", fim_args.seed, "Random seed");
    fim->add_option("--out", fim_args.out, "Output JSONL path")->required();

    CodeflowArgs codeflow_args;
    auto* codeflow = app.add_subcommand("codeflow", "Mine repository-evolution triplets");
    codeflow->add_option("--repo", codeflow_args.repo, "Git repository path")->required();
    codeflow->add_option("--repo-name", codeflow_args.repo_name, "Logical repository name");
    codeflow->add_option("--count", codeflow_args.count, "Start commits to draw");
    codeflow->add_option("--seed", codeflow_args.seed, "Random seed");
    codeflow->add_option("--min-gap", codeflow_args.min_gap, "Minimum commit gap");
    codeflow->add_option("--max-gap", codeflow_args.max_gap, "Maximum commit gap");
    codeflow->add_option("--min-lines", codeflow_args.min_lines, "Minimum changed lines");
    codeflow->add_option("--max-lines", codeflow_args.max_lines, "Maximum changed lines");
    codeflow->add_option("--scope", codeflow_args.scope, "Tree scope: changed or full");
    codeflow->add_option("--out", codeflow_args.out, "Output JSONL path")->required();

    DedupArgs dedup_args;
    auto* dedup = app.add_subcommand("dedup", "Exact and near-duplicate removal");
    dedup->add_option("--in", dedup_args.in, "Corpus JSONL")->required();
    dedup->add_option("--out", dedup_args.out, "Survivor JSONL path")->required();
    dedup->add_option("--report", dedup_args.report, "Cluster report path");
    dedup->add_option("--threshold", dedup_args.threshold, "Jaccard similarity threshold");
    dedup->add_option("--k", dedup_args.k, "MinHash signature length");
    dedup->add_option("--bands", dedup_args.bands, "LSH bands");
    dedup->add_option("--rows", dedup_args.rows, "LSH rows per band");
    dedup->add_option("--shingle-width", dedup_args.shingle_width, "Token shingle width");
    dedup->add_option("--seed", dedup_args.seed, "Hash seed");

    CompileArgs compile_args;
    auto* compile = app.add_subcommand("decontam-compile",
                                       "Compile benchmark text files into an n-gram rule set");
    compile->add_option("--rules", compile_args.rules, "Directory of .txt benchmark files")
        ->required();
    compile->add_option("--n", compile_args.n, "N-gram length");
    compile->add_option("--out", compile_args.out, "Compiled rules JSON path")->required();

    DecontamArgs decontam_args;
    auto* decontam = app.add_subcommand("decontaminate", "Flag benchmark-contaminated samples");
    decontam->add_option("--in", decontam_args.in, "Sample JSONL files")->required();
    decontam->add_option("--rules", decontam_args.rules,
                         "Rules directory or compiled rules JSON")
        ->required();
    decontam->add_option("--n", decontam_args.n, "N-gram length for plain-text rules");
    decontam->add_option("--hit-min", decontam_args.hit_min, "Distinct shared n-grams to flag");
    decontam->add_flag("--excise", decontam_args.excise,
                       "Cut matched spans instead of dropping samples");
    decontam->add_option("--out", decontam_args.out, "Clean JSONL path")->required();
    decontam->add_option("--report", decontam_args.report, "Flag report path");

    PackArgs pack_args;
    auto* pack = app.add_subcommand("pack", "Pack samples into fixed-capacity sequences");
    pack->add_option("--in", pack_args.in, "Sample JSONL files")->required();
    pack->add_option("--tier", pack_args.tier, "Context tier: 32k or 128k");
    pack->add_option("--seed", pack_args.seed, "Curriculum shuffle seed");
    pack->add_option("--counter", pack_args.counter,
                     "Token counter: default or external:<command>");
    pack->add_option("--isolate-min", pack_args.isolate_min,
                     "Isolate samples at least this long");
    pack->add_option("--oversize", pack_args.oversize, "Oversize policy: reject or error");
    pack->add_option("--out", pack_args.out, "Packed sequence JSONL path")->required();
    pack->add_option("--manifest", pack_args.manifest, "Packing manifest path");

    LoopArgs loop_args;
    auto* loopref = app.add_subcommand("loopref",
                                       "Run the gated dual-attention reference forward pass");
    loopref->add_option("--seq-len", loop_args.seq_len, "Sequence length");
    loopref->add_option("--d-model", loop_args.d_model, "Model width");
    loopref->add_option("--heads", loop_args.heads, "Attention heads");
    loopref->add_option("--seed", loop_args.seed, "Weight/embedding seed");
    loopref->add_flag("--check-recompute", loop_args.check_recompute,
                      "Recompute and compare fingerprints");
    loopref->add_option("--dump", loop_args.dump, "Directory for tensor dumps");

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run a configured pipeline");
    run->add_option("--config", run_args.config, "Pipeline config file")->required();
    run->add_option("--seed", run_args.seed, "Override the global seed");
    run->add_option("--out-dir", run_args.out_dir, "Override the output directory");
    run->add_option("--set", run_args.sets, "Override any config key (key=value)");

    std::string stats_dir;
    auto* stats = app.add_subcommand("stats", "Summarize pipeline artifacts");
    stats->add_option("--dir", stats_dir, "Pipeline output directory")->required();

    try {
        app.parse(argc, argv);
        if (ingest->parsed()) return cmd_ingest(ingest_args);
        if (fim->parsed()) return cmd_fim(fim_args);
        if (codeflow->parsed()) return cmd_codeflow(codeflow_args);
        if (dedup->parsed()) return cmd_dedup(dedup_args);
        if (compile->parsed()) return cmd_decontam_compile(compile_args);
        if (decontam->parsed()) return cmd_decontaminate(decontam_args);
        if (pack->parsed()) return cmd_pack(pack_args);
        if (loopref->parsed()) return cmd_loopref(loop_args);
        if (run->parsed()) return cmd_run(run_args);
        if (stats->parsed()) return cmd_stats(stats_dir);
        std::printf("%s\n", app.help().c_str());
        return 0;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const forge::Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n",
                     std::string(forge::error_code_name(e.code())).c_str(), e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
