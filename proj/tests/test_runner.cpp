#include "steercal/datasets.hpp"
#include "steercal/error.hpp"
#include "steercal/io.hpp"
#include "steercal/runner.hpp"

#include "support.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace steercal;
using nlohmann::json;
using steercal::test::run_command;
using steercal::test::TempDir;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const fs::path & out) {
    ExperimentConfig c;
    c.output_dir = out;
    c.synthetic.n_records = 630;
    c.synthetic.n_users = 8;
    return c;
}

std::map<std::string, std::string> tree(const fs::path & root) {
    std::map<std::string, std::string> files;
    for (const auto & e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            files[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
        }
    }
    return files;
}

std::string cli(const std::string & args) {
    return std::string(STEERCAL_CLI) + " " + args + " 2>/dev/null";
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
    const ExperimentConfig c;
    const std::string text = serialize_experiment_config(c);
    EXPECT_EQ(serialize_experiment_config(parse_experiment_config(text)), text);
    EXPECT_EQ(text.find("output_dir"), std::string::npos);
}

TEST(Config, OverridesParsed) {
    const auto c = parse_experiment_config(R"({
        "seed": 5, "workers": 2, "output_dir": "runs/a",
        "calibration": {"mode": "full_model", "alpha": 0.05, "grid": {"min": 0, "max": 2, "step": 0.1}, "layer": 1},
        "evaluation": {"lambdas": [0, "star", -1.5]},
        "retrieval": {"strategy": "fixed_k", "fixed_k": 3, "query": "name"},
        "split": {"fractions": [0.5, 0.25, 0.25]}
    })");
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(c.workers, 2u);
    EXPECT_EQ(c.output_dir, fs::path("runs/a"));
    EXPECT_EQ(c.mode, CalibrationMode::full_model);
    EXPECT_EQ(c.alpha, 0.05);
    EXPECT_EQ(c.grid.max, 2.0);
    EXPECT_EQ(c.layer, 1);
    ASSERT_EQ(c.eval_lambdas.size(), 3u);
    EXPECT_TRUE(c.eval_lambdas[1].star);
    EXPECT_EQ(c.eval_lambdas[2].value, -1.5);
    EXPECT_EQ(c.retrieval.strategy, TopKStrategy::fixed_k);
    EXPECT_EQ(c.retrieval.query, QueryText::name);
    EXPECT_EQ(c.split.fractions[0], 0.5);
    EXPECT_EQ(serialize_experiment_config(parse_experiment_config(serialize_experiment_config(c))),
              serialize_experiment_config(c));
}

TEST(Config, RejectsBadInput) {
    const char * bad[] = {
        "{", R"({"sede": 1})", R"({"calibration": {"alpha": 1.5}})", R"({"calibration": {"mode": "x"}})",
        R"({"calibration": {"grid": {"min": 3, "max": 1}}})", R"({"retrieval": {"k_min": 0}})",
        R"({"evaluation": {"lambdas": ["big"]}})", R"({"model": {"source": "bridge"}})",
        R"({"templates": {"relevance": "no slots"}})", R"({"seed": "one"})",
    };
    for (const char * text : bad) {
        EXPECT_THROW(parse_experiment_config(text), ConfigError) << text;
    }
    EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST(LambdaSpec, ParseAndLabel) {
    EXPECT_TRUE(LambdaSpec::parse("star").star);
    EXPECT_EQ(LambdaSpec::parse("-2").value, -2.0);
    EXPECT_EQ(LambdaSpec::parse("-2").label(), "-2");
    EXPECT_EQ(LambdaSpec::parse("1.5").label(), "1.5");
    EXPECT_EQ(LambdaSpec::parse("star").label(), "star");
    EXPECT_THROW(LambdaSpec::parse("2x"), ConfigError);
    EXPECT_THROW(LambdaSpec::parse("nan"), ConfigError);
}

TEST(Runner, EndToEndArtifacts) {
    TempDir dir("runner");
    const auto config = small_config(dir.path() / "out");
    std::ostringstream log;
    const RunContext ctx = load_context(config, true, true, log);

    const auto cal = run_calibration(config, ctx, log);
    ASSERT_EQ(cal.items.size(), 21u);
    for (int j = 1; j <= 21; ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "item_%02d.json", j);
        const auto doc = json::parse(read_file(config.output_dir / "vectors" / name));
        EXPECT_EQ(doc["item_id"], j);
        EXPECT_EQ(doc["layer"], 2);
        EXPECT_EQ(doc["vector"].size(), 32u);
        EXPECT_EQ(doc["mode"], "hyperplane_proxy");
        EXPECT_TRUE(doc["provenance"].contains("grid"));
    }
    EXPECT_EQ(load_vectors(config.output_dir).size(), 21u);

    const auto rel = run_relevance_eval(config, ctx, log);
    ASSERT_EQ(rel.results.size(), 6u);
    for (const char * label : {"-2", "-1", "star", "0", "1", "2"}) {
        EXPECT_TRUE(fs::exists(config.output_dir / "confusion" / (std::string("lambda_") + label + ".csv")));
        EXPECT_TRUE(fs::exists(config.output_dir / "logits" / (std::string("lambda_") + label + ".csv")));
    }
    EXPECT_EQ(rel.baseline, rel.results[3].confusion);
    const auto & star = rel.results[2].confusion;
    EXPECT_GT(star.non_relevant_accuracy(), rel.baseline.non_relevant_accuracy());

    const auto quest = run_questionnaire_eval(config, ctx, log);
    ASSERT_EQ(quest.reports.size(), 2u);
    EXPECT_EQ(quest.reports[0].first, "unsteered");
    EXPECT_EQ(quest.reports[1].second.n_users, 8u);
    EXPECT_TRUE(fs::exists(config.output_dir / "sheets" / "steered.json"));
    const auto metrics = json::parse(read_file(config.output_dir / "metrics.json"));
    EXPECT_TRUE(metrics["variants"].contains("steered"));
    EXPECT_NE(read_file(config.output_dir / "metrics.csv").find('%'), std::string::npos);

    write_manifest(config);
    const auto manifest = json::parse(read_file(config.output_dir / "manifest.json"));
    EXPECT_EQ(manifest["config_sha256"], sha256_hex(read_file(config.output_dir / "config.json")));
    std::size_t n = 0;
    for (const auto & [path, digest] : manifest["artifacts"].items()) {
        EXPECT_EQ(digest, sha256_hex(read_file(config.output_dir / path))) << path;
        ++n;
    }
    EXPECT_EQ(n, tree(config.output_dir).size() - 1);
    for (const auto & [path, _] : tree(config.output_dir)) {
        EXPECT_EQ(path.find(".staging-"), std::string::npos);
    }

    const std::string report = run_report(config);
    EXPECT_NE(report.find("Calibration"), std::string::npos);
    EXPECT_NE(report.find("steered"), std::string::npos);
}

TEST(Runner, MissingVectorsIsDataError) {
    TempDir dir("runner");
    EXPECT_THROW(load_vectors(dir.path()), DataError);
    EXPECT_THROW(run_report(small_config(dir.path())), DataError);
}

TEST(Runner, ItemWithoutRelevantRecordsAborts) {
    TempDir dir("runner");
    auto config = small_config(dir.path() / "out");
    std::ostringstream log;
    RunContext ctx = load_context(config, true, false, log);
    std::erase_if(ctx.corpus, [](const RelevanceRecord & r) { return r.item_id == 4 && r.label == 1; });
    try {
        run_calibration(config, ctx, log);
        FAIL();
    } catch (const CalibrationError & e) {
        EXPECT_NE(std::string(e.what()).find("item 4"), std::string::npos);
    }
}

TEST(Runner, SameOutputAcrossWorkerCounts) {
    TempDir dir("runner");
    auto a = small_config(dir.path() / "a");
    auto b = small_config(dir.path() / "b");
    a.workers = 1;
    b.workers = 3;
    std::ostringstream log;
    const RunContext ctx = load_context(a, true, false, log);
    for (const auto * c : {&a, &b}) {
        run_calibration(*c, ctx, log);
        run_relevance_eval(*c, ctx, log);
        write_manifest(*c);
    }
    EXPECT_EQ(tree(a.output_dir), tree(b.output_dir));
}

TEST(Cli, GenSyntheticThenCalibrateFromFiles) {
    TempDir dir("cli");
    const std::string data = (dir.path() / "data").string();
    ASSERT_EQ(run_command(cli("gen-synthetic --seed 3 -o " + data)), 0);
    const auto records = load_relevance_corpus(dir.path() / "data" / "relevance.ndjson");
    EXPECT_EQ(records.size(), 2000u);
    EXPECT_EQ(load_user_histories(dir.path() / "data" / "users.ndjson").size(), 40u);

    const std::string out = (dir.path() / "out").string();
    ASSERT_EQ(run_command(cli("calibrate --seed 3 -o " + out + " --relevance " + data + "/relevance.ndjson")), 0);
    ASSERT_EQ(run_command(cli("eval-relevance --seed 3 --lambda 0 --lambda star -o " + out + " --relevance " + data +
                              "/relevance.ndjson")),
              0);
    EXPECT_TRUE(fs::exists(dir.path() / "out" / "confusion" / "lambda_star.csv"));
    EXPECT_FALSE(fs::exists(dir.path() / "out" / "confusion" / "lambda_2.csv"));
    std::string report;
    EXPECT_EQ(run_command(cli("report -o " + out), &report), 0);
    EXPECT_NE(report.find("lambda_star"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    TempDir dir("cli");
    const auto bad_config = dir.path() / "bad.json";
    write_file_atomic(bad_config, R"({"calibration": {"alpha": 2}})");
    EXPECT_EQ(run_command(cli("calibrate -c " + bad_config.string() + " -o " + dir.path().string())), 2);
    EXPECT_EQ(run_command(cli("calibrate --mode nonsense -o " + dir.path().string())), 2);
    EXPECT_EQ(run_command(cli("calibrate --relevance /nonexistent.ndjson -o " + dir.path().string())), 3);
    EXPECT_EQ(run_command(cli("eval-relevance -o " + (dir.path() / "empty").string())), 3);

    // One item has no relevant records at all: calibration fails for it.
    std::vector<RelevanceRecord> records;
    for (int item = 1; item <= 21; ++item) {
        for (int i = 0; i < 12; ++i) {
            const int label = item == 6 ? 0 : (i < 4 ? 1 : 0);
            records.push_back({"p" + std::to_string(item) + "_" + std::to_string(i), item,
                               "post " + std::to_string(i), label});
        }
    }
    save_relevance_corpus(dir.path() / "r.ndjson", records);
    std::string err;
    EXPECT_EQ(run_command(std::string(STEERCAL_CLI) + " calibrate --relevance " + (dir.path() / "r.ndjson").string() +
                              " -o " + (dir.path() / "o").string() + " 2>&1",
                          &err),
              4);
    EXPECT_NE(err.find("item 6"), std::string::npos) << err;
}
