#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "forge/pipeline.hpp"
#include "helpers.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

// A small mixed-language corpus with one exact duplicate and one file that
// carries a long benchmark excerpt on a single line.
constexpr std::string_view kPlantedItem =
    "compute the running checksum over every block then fold the high word "
    "into the low word and return the folded value";

void fill_corpus(const fs::path& root) {
    testutil::write_file(root / "src/alpha.py",
                         "def add(a, b):\n"
                         "    total = a + b\n"
                         "    return total\n"
                         "\n"
                         "def mul(a, b):\n"
                         "    result = a * b\n"
                         "    return result\n");
    testutil::write_file(root / "src/beta.py",
                         "def sub(a, b):\n"
                         "    delta = a - b\n"
                         "    return delta\n"
                         "\n"
                         "def div(a, b):\n"
                         "    ratio = a / b\n"
                         "    return ratio\n");
    testutil::write_file(root / "src/gamma.ts",
                         "export function greet(name: string): string {\n"
                         "    const message = \"hello \" + name;\n"
                         "    return message;\n"
                         "}\n");
    testutil::write_file(root / "src/alpha_copy.py", testutil::read_file(root / "src/alpha.py"));
    testutil::write_file(root / "src/planted.py",
                         "def checksum(blocks):\n"
                         "    # " +
                             std::string(kPlantedItem) +
                             "\n"
                             "    return fold(blocks)\n");
}

// Linear history: lib.py grows one function per commit, a side file rotates.
void fill_evolution_repo(const fs::path& repo) {
    testutil::git_init(repo);
    for (int i = 1; i <= 12; ++i) {
        std::string lib;
        for (int j = 1; j <= i; ++j) {
            lib += "def fn_" + std::to_string(j) + "(x):\n    value = x + " +
                   std::to_string(j) + "\n    return value\n\n";
        }
        testutil::write_file(repo / "lib.py", lib);
        testutil::write_file(repo / ("util_" + std::to_string(i % 3) + ".py"),
                             "helper " + std::to_string(i) + " content line\n");
        testutil::git_commit_all(repo, "step " + std::to_string(i), 1700000000 + i * 1000);
    }
}

void fill_rules_dir(const fs::path& rules) {
    testutil::write_file(rules / "blockfold.txt", std::string(kPlantedItem) + "\n");
}

std::string pipeline_config_text(const fs::path& base, const std::string& out_dir) {
    return "# fixture pipeline\n"
           "seed = 42\n"
           "out_dir = " +
           out_dir +
           "\n"
           "stages = ingest, dedup, fim, codeflow, decontaminate, pack\n"
           "ingest.root = " +
           (base / "corpus").string() +
           "\n"
           "ingest.repo_name = demo\n"
           "fim.strategy = random_line\n"
           "codeflow.repo = " +
           (base / "evo").string() +
           "\n"
           "codeflow.count = 3\n"
           "decontaminate.rules = " +
           (base / "rules").string() +
           "\n"
           "decontaminate.n = 5\n"
           "pack.tier = 32k\n";
}

Json generic_doc(const std::string& doc_id, const std::string& text) {
    return Json{{"doc_id", doc_id}, {"text_b64", base64_encode(text)}};
}

std::string spaced_tokens(const std::string& stem, int first, int count) {
    std::string out;
    for (int i = 0; i < count; ++i) {
        if (!out.empty()) out += ' ';
        out += stem + std::to_string(first + i);
    }
    return out;
}

Json read_json_file(const fs::path& path) { return Json::parse(testutil::read_file(path)); }

std::map<std::string, std::string> snapshot_artifacts(const fs::path& dir) {
    std::map<std::string, std::string> bytes;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name == "manifest.json") continue;  // carries wall-clock timings
        bytes[name] = testutil::read_file(entry.path());
    }
    return bytes;
}

}  // namespace

TEST_CASE("pipeline config parses flat key paths", "[pipeline]") {
    PipelineConfig config = parse_pipeline_config(
        "# comment line\n"
        "\n"
        "seed = 99\n"
        "out_dir = some/dir\n"
        "stages = ingest, fim , pack\n"
        "ingest.root = /data/repo\n"
        "  fim.strategy =   syntax\n"
        "pack.tier = 128k\n");
    CHECK(config.seed == 99);
    CHECK(config.out_dir == "some/dir");
    CHECK(config.stages == std::vector<std::string>{"ingest", "fim", "pack"});
    CHECK(config.params.at("ingest").at("root") == "/data/repo");
    CHECK(config.params.at("fim").at("strategy") == "syntax");
    CHECK(config.params.at("pack").at("tier") == "128k");
    CHECK(config.raw_text.find("seed = 99") != std::string::npos);

    CHECK_THROWS_AS(parse_pipeline_config("bogus_key = 1\n"), Error);
    CHECK_THROWS_AS(parse_pipeline_config("seed = not_a_number\n"), Error);
    CHECK_THROWS_AS(parse_pipeline_config("just some words\n"), Error);
    CHECK_THROWS_AS(parse_pipeline_config(".dangling = 1\n"), Error);
}

TEST_CASE("pipeline config validation enforces stage order", "[pipeline]") {
    auto config_for = [](const std::string& stages,
                         std::map<std::string, std::map<std::string, std::string>> params = {}) {
        PipelineConfig config;
        config.stages = pipeline_detail::split_list(stages);
        config.params = std::move(params);
        // Satisfy required params unless the caller overrides them away.
        if (!config.params.count("ingest")) {
            config.params["ingest"] = {{"root", "r"}, {"repo_name", "n"}};
        }
        if (!config.params.count("codeflow")) {
            config.params["codeflow"] = {{"repo", "r"}};
        }
        if (!config.params.count("decontaminate")) {
            config.params["decontaminate"] = {{"rules", "r"}};
        }
        // Drop params for stages that are not listed; validation rejects them.
        for (auto it = config.params.begin(); it != config.params.end();) {
            bool listed = std::find(config.stages.begin(), config.stages.end(), it->first) !=
                          config.stages.end();
            it = listed ? std::next(it) : config.params.erase(it);
        }
        return config;
    };

    CHECK_NOTHROW(validate_pipeline_config(config_for("ingest, dedup, fim, pack")));
    CHECK_NOTHROW(validate_pipeline_config(config_for("codeflow, decontaminate")));
    CHECK_NOTHROW(
        validate_pipeline_config(config_for("ingest, fim, codeflow, decontaminate, pack")));

    CHECK_THROWS_AS(validate_pipeline_config(config_for("")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("fim, ingest")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("dedup")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("ingest, ingest")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("warp")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("pack")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("decontaminate, codeflow")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("ingest, pack, dedup")), Error);
    CHECK_THROWS_AS(validate_pipeline_config(config_for("ingest, fim, pack, decontaminate")),
                    Error);

    // Params must belong to known stages that are actually in the pipeline.
    PipelineConfig stray = config_for("ingest");
    stray.params["warp"] = {{"x", "1"}};
    CHECK_THROWS_AS(validate_pipeline_config(stray), Error);
    stray.params.erase("warp");
    stray.params["pack"] = {{"tier", "32k"}};
    CHECK_THROWS_AS(validate_pipeline_config(stray), Error);

    // Required stage params are checked statically.
    PipelineConfig missing = config_for("ingest");
    missing.params["ingest"].erase("root");
    CHECK_THROWS_AS(validate_pipeline_config(missing), Error);
    PipelineConfig no_rules = config_for("codeflow, decontaminate");
    no_rules.params["decontaminate"].erase("rules");
    CHECK_THROWS_AS(validate_pipeline_config(no_rules), Error);
}

TEST_CASE("ingest stage writes corpus records with conserved counts", "[pipeline]") {
    testutil::TempDir dir;
    fill_corpus(dir.path / "corpus");

    IngestOptions opts;
    opts.repo_name = "demo";
    opts.root = dir.path / "corpus";
    std::string out = (dir.path / "ingest.jsonl").string();
    StageCounts counts = run_ingest(opts, out);

    CHECK(counts.in == counts.out + counts.rejected);
    CHECK(counts.out == 5);

    std::vector<Json> records = read_jsonl_file(out);
    REQUIRE(records.size() == 5);
    std::vector<std::string> paths;
    for (const Json& j : records) {
        SourceFile f = source_file_from_json(j);
        CHECK(f.repo_name == "demo");
        CHECK(f.byte_len == f.content.size());
        CHECK(f.content == testutil::read_file(dir.path / "corpus" / f.path));
        paths.push_back(f.path);
    }
    CHECK(std::is_sorted(paths.begin(), paths.end()));
}

TEST_CASE("fim stage emits one sample per eligible file", "[pipeline]") {
    testutil::TempDir dir;
    fill_corpus(dir.path / "corpus");
    testutil::write_file(dir.path / "corpus/tiny.py", "x\n");  // too short to split

    IngestOptions ingest_opts;
    ingest_opts.repo_name = "demo";
    ingest_opts.root = dir.path / "corpus";
    std::string corpus = (dir.path / "ingest.jsonl").string();
    run_ingest(ingest_opts, corpus);

    std::map<std::string, std::string> content_of;
    for (const Json& j : read_jsonl_file(corpus)) {
        SourceFile f = source_file_from_json(j);
        content_of[f.file_id()] = f.content;
    }

    SECTION("file-level rendering round-trips to the source bytes") {
        FimOptions opts;
        opts.strategy = FimStrategy::random_line;
        opts.seed = 7;
        std::string out = (dir.path / "fim.jsonl").string();
        StageCounts counts = run_fim(corpus, opts, out);

        CHECK(counts.in == 6);
        CHECK(counts.out == 5);
        CHECK(counts.rejected == 1);
        CHECK(counts.reasons.at("too_few_lines") == 1);

        std::vector<Json> records = read_jsonl_file(out);
        REQUIRE(records.size() == 5);
        for (const Json& j : records) {
            const std::string& original = content_of.at(j.at("file_id").get<std::string>());
            std::string rendered = base64_decode(j.at("text_b64").get<std::string>());
            ParsedFim parsed = parse_rendered_fim(rendered);
            CHECK(parsed.prefix + parsed.middle + parsed.suffix == original);
            size_t start = j.at("span_start").get<size_t>();
            size_t end = j.at("span_end").get<size_t>();
            CHECK(parsed.middle == original.substr(start, end - start));
            CHECK(j.at("kind") == "file_level");
            CHECK(j.at("level").is_null());
        }
    }

    SECTION("repo-level rendering pulls sibling context") {
        FimOptions opts;
        opts.strategy = FimStrategy::syntax;
        opts.level = NodeLevel::statement;
        opts.repo_level = true;
        opts.context_k = 2;
        opts.seed = 11;
        std::string out = (dir.path / "fim_repo.jsonl").string();
        StageCounts counts = run_fim(corpus, opts, out);
        CHECK(counts.in == counts.out + counts.rejected);

        std::vector<Json> records = read_jsonl_file(out);
        REQUIRE(!records.empty());
        for (const Json& j : records) {
            std::string rendered = base64_decode(j.at("text_b64").get<std::string>());
            CHECK(j.at("kind") == "repo_level");
            CHECK(j.at("level") == "statement");
            CHECK(rendered.rfind("<|repo_name|>demo", 0) == 0);
        }
    }

    SECTION("syntax strategy without a level is rejected up front") {
        FimOptions opts;
        opts.strategy = FimStrategy::syntax;
        opts.level.reset();
        CHECK_THROWS_AS(run_fim(corpus, opts, (dir.path / "x.jsonl").string()), Error);
    }
}

TEST_CASE("codeflow stage records lifecycle metadata", "[pipeline]") {
    testutil::TempDir dir;
    fill_evolution_repo(dir.path / "evo");

    CodeflowOptions opts;
    opts.repo_name = "evo";
    opts.repo_root = dir.path / "evo";
    opts.seed = 5;
    opts.mining.count = 3;
    std::string out = (dir.path / "codeflow.jsonl").string();
    StageCounts counts = run_codeflow(opts, out);

    CHECK(counts.in == counts.out + counts.rejected);
    CHECK(counts.out >= 1);

    for (const Json& j : read_jsonl_file(out)) {
        CHECK(j.at("repo_name") == "evo");
        double percentile = j.at("start_percentile").get<double>();
        CHECK(percentile >= 0.40);
        CHECK(percentile <= 0.80);
        std::string patch = base64_decode(j.at("patch_b64").get<std::string>());
        CHECK(patch.find("@@") != std::string::npos);
        CHECK(j.at("stats").at("files_changed").get<uint64_t>() >= 1);
        CHECK(!j.at("old_files").at("files").empty());
        CHECK(j.at("old_files").at("commit") == j.at("start_hash"));
        CHECK(j.at("new_files").at("commit") == j.at("end_hash"));
    }
}

TEST_CASE("dedup stage keeps survivor lines byte for byte", "[pipeline]") {
    testutil::TempDir dir;
    std::string base = spaced_tokens("tok", 0, 200);
    std::vector<Json> docs = {
        generic_doc("a", base),
        generic_doc("b", base + " extra0 extra1"),         // near duplicate of a
        generic_doc("c", spaced_tokens("other", 0, 120)),  // unrelated
        generic_doc("a2", base),                           // exact duplicate of a
    };
    std::string in = (dir.path / "corpus.jsonl").string();
    write_jsonl_file(in, docs);
    std::vector<std::string> in_lines = read_lines_file(in);

    DedupOptions opts;
    std::string out = (dir.path / "dedup.jsonl").string();
    std::string report_path = (dir.path / "dedup.report.json").string();
    StageCounts counts = run_dedup(in, opts, out, report_path);

    CHECK(counts.in == 4);
    CHECK(counts.out == 2);
    CHECK(counts.reasons.at("exact_duplicate") == 1);
    CHECK(counts.reasons.at("near_duplicate") == 1);

    std::vector<std::string> out_lines = read_lines_file(out);
    REQUIRE(out_lines.size() == 2);
    CHECK(out_lines[0] == in_lines[0]);
    CHECK(out_lines[1] == in_lines[2]);

    Json report = read_jsonl_file(report_path).at(0);
    CHECK(report.at("exact_drops").at(0).at("dropped") == "a2");
    CHECK(report.at("fuzzy_drops").at(0) == Json{{"dropped", "b"}, {"survivor", "a"}});
    CHECK(report.at("clusters").at(0).at("members") == Json::array({"a", "b"}));

    // Idempotence: deduping the survivors again drops nothing.
    std::string out2 = (dir.path / "dedup2.jsonl").string();
    StageCounts again = run_dedup(out, opts, out2, (dir.path / "r2.json").string());
    CHECK(again.rejected == 0);
    CHECK(testutil::read_file(out) == testutil::read_file(out2));
}

TEST_CASE("decontaminate stage drops flagged samples and can excise spans", "[pipeline]") {
    testutil::TempDir dir;
    fill_rules_dir(dir.path / "rules");
    std::vector<Json> docs = {
        generic_doc("contaminated",
                    "prologue text\n" + std::string(kPlantedItem) + "\nepilogue text\n"),
        generic_doc("clean", spaced_tokens("fresh", 0, 60)),
    };
    std::string in = (dir.path / "samples.jsonl").string();
    write_jsonl_file(in, docs);
    std::vector<std::string> in_lines = read_lines_file(in);

    DecontamOptions opts;
    opts.rules_path = dir.path / "rules";
    opts.ngram_len = 5;

    SECTION("default mode removes flagged documents") {
        std::string out = (dir.path / "clean.jsonl").string();
        std::string report_path = (dir.path / "report.json").string();
        StageCounts counts = run_decontaminate({in}, opts, out, report_path);
        CHECK(counts.in == 2);
        CHECK(counts.out == 1);
        CHECK(counts.reasons.at("contaminated") == 1);

        std::vector<std::string> out_lines = read_lines_file(out);
        REQUIRE(out_lines.size() == 1);
        CHECK(out_lines[0] == in_lines[1]);

        Json report = read_jsonl_file(report_path).at(0);
        CHECK(report.at("flags").at(0).at("doc_id") == "contaminated");
        CHECK(report.at("flags").at(0).at("benchmark_name") == "blockfold");
        CHECK(report.at("excised") == 0);
    }

    SECTION("excise mode rewrites matched spans in place") {
        opts.excise = true;
        std::string out = (dir.path / "excised.jsonl").string();
        std::string report_path = (dir.path / "report.json").string();
        StageCounts counts = run_decontaminate({in}, opts, out, report_path);
        CHECK(counts.in == 2);
        CHECK(counts.out == 2);
        CHECK(counts.rejected == 0);

        std::vector<Json> out_records = read_jsonl_file(out);
        std::string rewritten = base64_decode(out_records.at(0).at("text_b64").get<std::string>());
        CHECK(rewritten.find("prologue") != std::string::npos);
        CHECK(rewritten.find("checksum over every block") == std::string::npos);
        CHECK(read_jsonl_file(report_path).at(0).at("excised") == 1);

        // The excised corpus comes out clean on a second pass.
        StageCounts again = run_decontaminate({out}, opts, (dir.path / "again.jsonl").string(),
                                              (dir.path / "again.report.json").string());
        CHECK(read_jsonl_file((dir.path / "again.report.json").string())
                  .at(0)
                  .at("flags")
                  .empty());
        CHECK(again.in == 2);
    }
}

TEST_CASE("pack stage writes packed sequences and a fill manifest", "[pipeline]") {
    testutil::TempDir dir;
    std::vector<Json> docs;
    for (int i = 0; i < 40; ++i) {
        docs.push_back(generic_doc("doc" + std::to_string(i),
                                   std::string(static_cast<size_t>(400 + i * 97), 'x')));
    }
    std::string in = (dir.path / "samples.jsonl").string();
    write_jsonl_file(in, docs);

    PackOptions opts;
    opts.tier = ContextTier::ctx_32k;
    opts.seed = 9;
    std::string out = (dir.path / "pack.jsonl").string();
    std::string manifest_path = (dir.path / "pack.manifest.json").string();
    StageCounts counts = run_pack({in}, opts, out, manifest_path);

    CHECK(counts.in == 40);
    CHECK(counts.out == 40);
    CHECK(counts.rejected == 0);

    std::vector<Json> sequences = read_jsonl_file(out);
    REQUIRE(!sequences.empty());
    double occupied_total = 0.0;
    std::set<std::string> placed;
    for (const Json& seq : sequences) {
        CHECK(seq.at("tier") == "32k");
        size_t offset = 0;
        size_t occupied = 0;
        auto runs = seq.at("runs");
        auto segments = seq.at("segments");
        REQUIRE(runs.size() == segments.size());
        for (size_t s = 0; s < segments.size(); ++s) {
            const Json& seg = segments.at(s);
            CHECK(seg.at("start_token").get<size_t>() == offset);
            CHECK(seg.at("length").get<size_t>() == runs.at(s).get<size_t>());
            offset += seg.at("length").get<size_t>();
            occupied += seg.at("length").get<size_t>();
            CHECK(placed.insert(seg.at("sample_id").get<std::string>()).second);
        }
        CHECK(occupied <= tier_capacity(ContextTier::ctx_32k));
        CHECK(seq.at("fill").get<double>() ==
              Catch::Approx(static_cast<double>(occupied) /
                            static_cast<double>(tier_capacity(ContextTier::ctx_32k))));
        occupied_total += static_cast<double>(occupied);
    }
    CHECK(placed.size() == 40);

    Json manifest = read_jsonl_file(manifest_path).at(0);
    CHECK(manifest.at("sequence_count").get<size_t>() == sequences.size());
    CHECK(manifest.at("samples_packed") == 40);
    double expected_aggregate =
        occupied_total / (static_cast<double>(sequences.size()) *
                          static_cast<double>(tier_capacity(ContextTier::ctx_32k)));
    CHECK(manifest.at("aggregate_fill").get<double>() == Catch::Approx(expected_aggregate));
}

TEST_CASE("pack stage supports an external token counter", "[pipeline]") {
    testutil::TempDir dir;
    std::string in = (dir.path / "samples.jsonl").string();
    write_jsonl_file(in, {generic_doc("only", "hello")});

    PackOptions opts;
    opts.counter_spec = "external:wc -c";  // one token per byte
    std::string out = (dir.path / "pack.jsonl").string();
    StageCounts counts = run_pack({in}, opts, out, (dir.path / "m.json").string());
    CHECK(counts.out == 1);

    std::vector<Json> sequences = read_jsonl_file(out);
    REQUIRE(sequences.size() == 1);
    CHECK(sequences.at(0).at("segments").at(0).at("length") == 5);

    CHECK_THROWS_AS(make_token_counter("external:"), Error);
    CHECK_THROWS_AS(make_token_counter("oracle"), Error);
}

TEST_CASE("pipeline run produces conserved manifests and identical reruns", "[pipeline]") {
    testutil::TempDir dir;
    fill_corpus(dir.path / "corpus");
    fill_evolution_repo(dir.path / "evo");
    fill_rules_dir(dir.path / "rules");

    std::string out_dir = (dir.path / "out").string();
    PipelineConfig config = parse_pipeline_config(pipeline_config_text(dir.path, out_dir));
    RunManifest manifest = run_pipeline(config);

    REQUIRE(manifest.ok);
    CHECK(manifest.failed_stage.empty());
    CHECK(manifest.tool_version == kForgeVersion);
    CHECK(manifest.config_digest == digest128_hex(digest128(config.raw_text)));
    REQUIRE(manifest.stages.size() == 6);

    std::map<std::string, StageCounts> by_name;
    for (const StageRecord& stage : manifest.stages) {
        CHECK(stage.counts.in == stage.counts.out + stage.counts.rejected);
        uint64_t reason_sum = 0;
        for (const auto& [_, n] : stage.counts.reasons) reason_sum += n;
        CHECK(reason_sum == stage.counts.rejected);
        CHECK(stage.seed == derive_seed(config.seed, stage.name));
        by_name[stage.name] = stage.counts;
    }

    // Counts chain across stages: each consumer sees its producer's output.
    CHECK(by_name.at("ingest").out == 5);
    CHECK(by_name.at("dedup").in == by_name.at("ingest").out);
    CHECK(by_name.at("dedup").reasons.at("exact_duplicate") == 1);
    CHECK(by_name.at("fim").in == by_name.at("dedup").out);
    CHECK(by_name.at("decontaminate").in ==
          by_name.at("fim").out + by_name.at("codeflow").out);
    CHECK(by_name.at("decontaminate").reasons.at("contaminated") >= 1);
    CHECK(by_name.at("pack").in == by_name.at("decontaminate").out);

    // The run manifest lands on disk and validates.
    Json manifest_json = read_json_file(fs::path(out_dir) / "manifest.json");
    CHECK(manifest_json.at("ok") == true);
    CHECK(manifest_json.at("schema_version") == kManifestSchemaVersion);
    CHECK(manifest_json.at("stages").size() == 6);

    // Rerunning in place leaves every artifact byte-identical.
    std::map<std::string, std::string> first = snapshot_artifacts(out_dir);
    RunManifest manifest2 = run_pipeline(config);
    REQUIRE(manifest2.ok);
    std::map<std::string, std::string> second = snapshot_artifacts(out_dir);
    REQUIRE(first.size() == second.size());
    for (const auto& [name, bytes] : first) {
        INFO("artifact: " << name);
        CHECK(second.at(name) == bytes);
    }
}

TEST_CASE("empty corpus flows through the full pipeline conserving counts", "[pipeline]") {
    testutil::TempDir dir;
    fs::create_directories(dir.path / "corpus");
    std::string out_dir = (dir.path / "out").string();

    PipelineConfig config = parse_pipeline_config(
        "seed = 9\n"
        "out_dir = " +
        out_dir +
        "\n"
        "stages = ingest, dedup, fim, pack\n"
        "ingest.root = " +
        (dir.path / "corpus").string() +
        "\n"
        "ingest.repo_name = empty\n"
        "fim.strategy = random_line\n"
        "pack.tier = 32k\n");
    RunManifest manifest = run_pipeline(config);

    REQUIRE(manifest.ok);
    REQUIRE(manifest.stages.size() == 4);
    for (const StageRecord& stage : manifest.stages) {
        INFO("stage: " << stage.name);
        CHECK(stage.counts.in == 0);
        CHECK(stage.counts.out == 0);
        CHECK(stage.counts.rejected == 0);
        CHECK(stage.counts.reasons.empty());
        CHECK(read_lines_file(fs::path(out_dir) / stage.counts.output).empty());
    }
    Json pack_manifest = read_json_file(fs::path(out_dir) / "pack.manifest.json");
    CHECK(pack_manifest.at("sequence_count") == 0);
    CHECK(pack_manifest.at("aggregate_fill") == 0.0);
}

TEST_CASE("frozen fixture pipeline matches pinned golden counts", "[pipeline]") {
    testutil::TempDir dir;
    fill_corpus(dir.path / "corpus");
    fill_evolution_repo(dir.path / "evo");
    fill_rules_dir(dir.path / "rules");

    std::string out_dir = (dir.path / "out").string();
    PipelineConfig config = parse_pipeline_config(pipeline_config_text(dir.path, out_dir));
    RunManifest manifest = run_pipeline(config);
    REQUIRE(manifest.ok);

    std::map<std::string, StageCounts> by_name;
    for (const StageRecord& stage : manifest.stages) by_name[stage.name] = stage.counts;

    // Golden counts computed once on the frozen fixture, pinned here.
    CHECK(by_name.at("ingest").in == 5);
    CHECK(by_name.at("ingest").out == 5);
    CHECK(by_name.at("dedup").out == 4);
    CHECK(by_name.at("dedup").rejected == 1);
    CHECK(by_name.at("fim").out == 4);
    CHECK(by_name.at("fim").rejected == 0);
    CHECK(by_name.at("codeflow").in == 3);
    CHECK(by_name.at("codeflow").out == 3);
    CHECK(by_name.at("codeflow").rejected == 0);
    CHECK(by_name.at("decontaminate").in == 7);
    CHECK(by_name.at("decontaminate").out == 6);
    CHECK(by_name.at("pack").in == 6);
    CHECK(by_name.at("pack").out == 6);

    Json pack_manifest = read_json_file(fs::path(out_dir) / "pack.manifest.json");
    CHECK(pack_manifest.at("sequence_count") == 1);
}

TEST_CASE("pipeline aborts with a partial manifest when a stage fails", "[pipeline]") {
    testutil::TempDir dir;
    fill_corpus(dir.path / "corpus");

    PipelineConfig config = parse_pipeline_config(
        "seed = 1\n"
        "out_dir = " +
        (dir.path / "out").string() +
        "\n"
        "stages = ingest, codeflow\n"
        "ingest.root = " +
        (dir.path / "corpus").string() +
        "\n"
        "ingest.repo_name = demo\n"
        "codeflow.repo = " +
        (dir.path / "corpus").string() +  // not a git repository
        "\n");
    RunManifest manifest = run_pipeline(config);

    CHECK_FALSE(manifest.ok);
    CHECK(manifest.failed_stage == "codeflow");
    CHECK(!manifest.error.empty());
    REQUIRE(manifest.stages.size() == 2);
    CHECK(manifest.stages[0].counts.out == 5);

    Json on_disk = read_json_file(dir.path / "out/manifest.json");
    CHECK(on_disk.at("ok") == false);
    CHECK(on_disk.at("failed_stage") == "codeflow");
}

TEST_CASE("stats report is deterministic and cross-checks packed fills", "[pipeline]") {
    testutil::TempDir dir;
    fill_corpus(dir.path / "corpus");
    fill_evolution_repo(dir.path / "evo");
    fill_rules_dir(dir.path / "rules");

    std::string out_dir = (dir.path / "out").string();
    RunManifest manifest =
        run_pipeline(parse_pipeline_config(pipeline_config_text(dir.path, out_dir)));
    REQUIRE(manifest.ok);

    Json stats = report_stats(out_dir);
    CHECK(stats.dump() == report_stats(out_dir).dump());

    CHECK(stats.at("languages").at("python").get<uint64_t>() >= 3);
    CHECK(stats.at("languages").at("typescript") == 1);
    CHECK(stats.at("fim_strategies").at("random_line").get<uint64_t>() >= 1);
    CHECK(stats.at("dedup").at("exact_drops") == 1);

    uint64_t triplets = 0;
    for (const Json& bucket : stats.at("triplet_percentile_histogram")) {
        triplets += bucket.get<uint64_t>();
    }
    CHECK(triplets >= 1);

    double fill_sum = 0.0;
    std::vector<Json> sequences = read_jsonl_file(out_dir + "/pack.jsonl");
    for (const Json& seq : sequences) fill_sum += seq.at("fill").get<double>();
    CHECK(stats.at("pack").at("sequence_count").get<size_t>() == sequences.size());
    CHECK(stats.at("pack").at("mean_fill").get<double>() ==
          Catch::Approx(fill_sum / static_cast<double>(sequences.size())));

    // stats.json written by the pipeline matches a fresh computation.
    CHECK(testutil::read_file(fs::path(out_dir) / "stats.json") == stats.dump(2) + "\n");
}

TEST_CASE("compiled rules round trip through json", "[pipeline]") {
    testutil::TempDir dir;
    testutil::write_file(dir.path / "rules/alpha.txt",
                         spaced_tokens("alpha", 0, 14) + "\n" + spaced_tokens("alpha", 50, 9) +
                             "\n");
    testutil::write_file(dir.path / "rules/beta.txt", spaced_tokens("beta", 0, 12) + "\n");

    std::vector<ContaminationRule> rules = load_rules(dir.path / "rules", 6);
    REQUIRE(rules.size() == 2);
    CHECK(rules[0].benchmark_name == "alpha");
    CHECK(rules[1].benchmark_name == "beta");
    CHECK(rules[0].ngram_len == 6);
    CHECK(rules[0].ngram_set.size() == (14 - 6 + 1) + (9 - 6 + 1));

    std::string compiled = (dir.path / "rules.json").string();
    write_lines_file(compiled, {rules_to_json(rules).dump()});
    std::vector<ContaminationRule> loaded = load_rules(compiled, 0);
    REQUIRE(loaded.size() == rules.size());
    for (size_t i = 0; i < rules.size(); ++i) {
        CHECK(loaded[i].benchmark_name == rules[i].benchmark_name);
        CHECK(loaded[i].ngram_len == rules[i].ngram_len);
        CHECK(loaded[i].ngram_set == rules[i].ngram_set);
    }

    CHECK_THROWS_AS(load_rules(dir.path / "missing", 6), Error);
    testutil::write_file(dir.path / "empty_rules/.keep", "");
    CHECK_THROWS_AS(load_rules(dir.path / "empty_rules", 6), Error);
}

TEST_CASE("cli binary honors the exit code contract", "[pipeline][cli]") {
    const std::string cli = FORGE_CLI_PATH;
    testutil::TempDir dir;

    CommandResult loop = run_command({cli, "loopref", "--seq-len", "4", "--d-model", "8",
                                      "--heads", "2", "--seed", "3", "--check-recompute"});
    CHECK(loop.exit_code == 0);
    CHECK(loop.out.find("fingerprint ") != std::string::npos);
    CHECK(loop.out.find("invariants pass") != std::string::npos);

    CommandResult bad_flag = run_command({cli, "loopref", "--no-such-flag"});
    CHECK(bad_flag.exit_code == 1);

    testutil::write_file(dir.path / "bad.cfg",
                         "seed = 1\nout_dir = " + (dir.path / "out").string() +
                             "\nstages = fim, ingest\ningest.root = x\ningest.repo_name = y\n");
    CommandResult bad_order =
        run_command({cli, "run", "--config", (dir.path / "bad.cfg").string()});
    CHECK(bad_order.exit_code == 1);

    testutil::write_file(dir.path / "fail.cfg",
                         "seed = 1\nout_dir = " + (dir.path / "out").string() +
                             "\nstages = codeflow\ncodeflow.repo = " +
                             (dir.path / "nogit").string() + "\n");
    std::filesystem::create_directories(dir.path / "nogit");
    CommandResult stage_fail =
        run_command({cli, "run", "--config", (dir.path / "fail.cfg").string()});
    CHECK(stage_fail.exit_code == 2);

    CommandResult help = run_command({cli, "--help"});
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("ingest") != std::string::npos);
}
