#pragma once

#include "steercal/datasets.hpp"
#include "steercal/metrics.hpp"
#include "steercal/model.hpp"
#include "steercal/retrieval.hpp"
#include "steercal/steering.hpp"
#include "steercal/synthetic.hpp"
#include "steercal/templates.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace steercal {

enum class ModelSource { synthetic, bridge };

// One entry of an evaluation strength list: a number or the per-item lambda*.
struct LambdaSpec {
    bool star = false;
    double value = 0.0;

    static LambdaSpec parse(std::string_view text);
    // File-name label: "star", "0", "-2", "1.5".
    std::string label() const;

    friend bool operator==(const LambdaSpec &, const LambdaSpec &) = default;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    std::size_t workers = 0;  // 0: STEERCAL_WORKERS or hardware concurrency

    ModelSource model_source = ModelSource::synthetic;
    std::vector<std::string> bridge_command;
    std::string bridge_encoding = "json";
    SyntheticConfig synthetic;  // its seed is always the experiment seed

    // Empty paths with the synthetic source mean "generate in memory".
    std::filesystem::path relevance_path;
    std::filesystem::path users_path;
    FieldMap fields;

    SplitSpec split;

    CalibrationMode mode = CalibrationMode::hyperplane_proxy;
    double alpha = 0.01;
    LambdaGrid grid;
    std::optional<int> layer;  // defaults to L/2

    std::vector<LambdaSpec> eval_lambdas = {{false, -2.0}, {false, -1.0}, {true, 0.0},
                                            {false, 0.0},  {false, 1.0},  {false, 2.0}};
    std::vector<double> questionnaire_lambdas;  // extra fixed strengths

    RetrievalConfig retrieval;
    std::size_t embed_dim = 512;

    PromptTemplates templates = PromptTemplates::defaults();

    // Throws ConfigError naming the offending field.
    void validate() const;
};

// Reads a JSON document; unknown keys are rejected so typos do not pass silently.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path & path);

// Canonical JSON of everything that determines the results. The output
// directory and worker count are left out: they do not change any artifact.
std::string serialize_experiment_config(const ExperimentConfig & config);

// Model, embedder and data resolved from a config.
struct RunContext {
    std::shared_ptr<const LanguageModel> model;
    std::shared_ptr<const EmbeddingProvider> embedder;
    std::vector<RelevanceRecord> corpus;
    std::vector<UserHistory> users;
};

RunContext load_context(const ExperimentConfig & config, bool need_corpus, bool need_users, std::ostream & log);

struct ItemCalibration {
    SteeringArtifact artifact;
    std::size_t n_train = 0;
    std::size_t n_validation = 0;
};

struct CalibrationSummary {
    std::vector<ItemCalibration> items;  // item order 1..21
};

// Calibrates all 21 items and writes vectors/item_XX.json and
// calibration_summary.csv. Any item lacking a class aborts with its id.
CalibrationSummary run_calibration(const ExperimentConfig & config, const RunContext & context, std::ostream & log);

struct LambdaEvaluation {
    LambdaSpec lambda;
    ConfusionMatrix confusion;
};

struct RelevanceSummary {
    std::vector<LambdaEvaluation> results;  // in request order
    ConfusionMatrix baseline;               // lambda = 0
};

// Evaluates the test split at each strength; writes confusion/lambda_*.csv,
// logits/lambda_*.csv and relative_change.csv. Requires calibrated vectors.
RelevanceSummary run_relevance_eval(const ExperimentConfig & config, const RunContext & context, std::ostream & log);

struct QuestionnaireSummary {
    // Variant name ("unsteered", "steered", "lambda_1") to report.
    std::vector<std::pair<std::string, MetricReport>> reports;
    std::vector<std::pair<std::string, std::vector<AnswerSheet>>> sheets;
    std::vector<AnswerSheet> truth;
};

// Completes the questionnaire for every user with a true sheet (others are
// skipped with a warning) and writes sheets/*.json and metrics.{json,csv}.
QuestionnaireSummary run_questionnaire_eval(const ExperimentConfig & config, const RunContext & context,
                                            std::ostream & log);

// Writes the relevance corpus and user histories of the synthetic world to
// the output directory (relevance.ndjson, users.ndjson).
void run_gen_synthetic(const ExperimentConfig & config, std::ostream & log);

// Human-readable digest of the artifacts already in the output directory.
std::string run_report(const ExperimentConfig & config);

// Loads vectors/item_XX.json for all 21 items.
std::map<int, SteeringArtifact> load_vectors(const std::filesystem::path & output_dir);

// Writes config.json and manifest.json (config digest, seed and a SHA-256 of
// every other file under the output directory).
void write_manifest(const ExperimentConfig & config);

} // namespace steercal
