#include "steercal/error.hpp"
#include "steercal/retrieval.hpp"
#include "steercal/rng.hpp"
#include "steercal/runner.hpp"
#include "steercal/synthetic.hpp"
#include "steercal/wire.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace steercal;

namespace {

struct Overrides {
    std::string config_path;
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> mode;
    std::optional<double> alpha;
    std::optional<std::string> relevance;
    std::optional<std::string> users;
    std::vector<std::string> lambdas;
};

void add_common(CLI::App * cmd, Overrides & o) {
    cmd->add_option("-c,--config", o.config_path, "Experiment config (JSON)");
    cmd->add_option("-o,--output", o.output, "Output directory");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("-j,--workers", o.workers, "Worker threads (default: STEERCAL_WORKERS or all cores)");
}

void add_data(CLI::App * cmd, Overrides & o) {
    cmd->add_option("--relevance", o.relevance, "Relevance corpus (NDJSON)");
    cmd->add_option("--users", o.users, "User histories (NDJSON)");
}

ExperimentConfig resolve(const Overrides & o) {
    ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_experiment_config(o.config_path);
    if (o.output) {
        c.output_dir = *o.output;
    }
    if (o.seed) {
        c.seed = *o.seed;
    }
    if (o.workers) {
        c.workers = *o.workers;
    }
    if (o.mode) {
        c.mode = parse_calibration_mode(*o.mode);
    }
    if (o.alpha) {
        c.alpha = *o.alpha;
    }
    if (o.relevance) {
        c.relevance_path = *o.relevance;
    }
    if (o.users) {
        c.users_path = *o.users;
    }
    if (!o.lambdas.empty()) {
        c.eval_lambdas.clear();
        for (const auto & l : o.lambdas) {
            c.eval_lambdas.push_back(LambdaSpec::parse(l));
        }
    }
    c.validate();
    return c;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"Steering-vector calibration for LLM relevance judgement and questionnaire completion"};
    app.require_subcommand(1);
    Overrides o;

    auto * gen = app.add_subcommand("gen-synthetic", "Write a synthetic relevance corpus and user histories");
    add_common(gen, o);
    auto * cal = app.add_subcommand("calibrate", "Compute and calibrate one steering vector per item");
    add_common(cal, o);
    add_data(cal, o);
    cal->add_option("--mode", o.mode, "Calibration mode: hyperplane_proxy or full_model");
    cal->add_option("--alpha", o.alpha, "Target miss rate on relevant validation posts");
    auto * rel = app.add_subcommand("eval-relevance", "Evaluate relevance judgement across steering strengths");
    add_common(rel, o);
    add_data(rel, o);
    rel->add_option("--lambda", o.lambdas, "Strengths to evaluate (numbers or \"star\")");
    auto * quest = app.add_subcommand("eval-questionnaire", "Complete questionnaires with and without steering");
    add_common(quest, o);
    add_data(quest, o);
    auto * all = app.add_subcommand("run", "calibrate, eval-relevance and eval-questionnaire in sequence");
    add_common(all, o);
    add_data(all, o);
    all->add_option("--mode", o.mode, "Calibration mode: hyperplane_proxy or full_model");
    all->add_option("--alpha", o.alpha, "Target miss rate on relevant validation posts");
    auto * report = app.add_subcommand("report", "Print the tables of an output directory");
    add_common(report, o);
    auto * serve_cmd = app.add_subcommand("serve-model", "Serve the synthetic model over stdin/stdout");
    add_common(serve_cmd, o);

    CLI11_PARSE(app, argc, argv);

    try {
        const ExperimentConfig config = resolve(o);
        if (gen->parsed()) {
            run_gen_synthetic(config, std::cerr);
        } else if (cal->parsed() || all->parsed()) {
            const RunContext ctx = load_context(config, true, all->parsed(), std::cerr);
            run_calibration(config, ctx, std::cerr);
            write_manifest(config);
            if (all->parsed()) {
                run_relevance_eval(config, ctx, std::cerr);
                write_manifest(config);
                run_questionnaire_eval(config, ctx, std::cerr);
                write_manifest(config);
                std::cout << run_report(config);
            }
        } else if (rel->parsed()) {
            const RunContext ctx = load_context(config, true, false, std::cerr);
            run_relevance_eval(config, ctx, std::cerr);
            write_manifest(config);
        } else if (quest->parsed()) {
            const RunContext ctx = load_context(config, false, true, std::cerr);
            run_questionnaire_eval(config, ctx, std::cerr);
            write_manifest(config);
        } else if (report->parsed()) {
            std::cout << run_report(config);
        } else if (serve_cmd->parsed()) {
            SyntheticConfig synthetic = config.synthetic;
            synthetic.seed = config.seed;
            const ToyModel model = build_planted_model(synthetic);
            const ToyEmbedder embedder(config.embed_dim, derive_seed(config.seed, "embedder"));
            std::ios::sync_with_stdio(false);
            serve(model, &embedder, std::cin, std::cout);
        }
    } catch (const Error & e) {
        std::cerr << "steercal: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const std::exception & e) {
        std::cerr << "steercal: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data_error);
    }
    return 0;
}
