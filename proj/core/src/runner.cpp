#include "steercal/runner.hpp"

#include "steercal/contrast.hpp"
#include "steercal/error.hpp"
#include "steercal/io.hpp"
#include "steercal/parallel.hpp"
#include "steercal/rng.hpp"
#include "steercal/tasks.hpp"
#include "steercal/wire.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace steercal {

using nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string num(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

std::string item_file(int item_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "item_%02d.json", item_id);
    return buf;
}

// Rejects keys outside `allowed` so misspelled settings fail loudly.
void check_keys(const json & obj, const std::string & where, std::initializer_list<const char *> allowed) {
    if (!obj.is_object()) {
        throw ConfigError(where + " must be a JSON object");
    }
    for (const auto & [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char * a) { return key == a; })) {
            throw ConfigError("unknown config key \"" + where + "." + key + "\"");
        }
    }
}

template <typename T>
void read(const json & obj, const char * key, T & out, const std::string & where) {
    if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
        try {
            out = it->get<T>();
        } catch (const json::exception & e) {
            throw ConfigError("config key \"" + where + "." + key + "\" has the wrong type: " + e.what());
        }
    }
}

std::string_view to_string(ModelSource source) {
    return source == ModelSource::bridge ? "bridge" : "synthetic";
}

std::string_view to_string(QueryText query) {
    return query == QueryText::name ? "name" : "keyword";
}

std::vector<RelevanceRecord> of_item(std::span<const RelevanceRecord> records, int item_id) {
    std::vector<RelevanceRecord> out;
    for (const auto & r : records) {
        if (r.item_id == item_id) {
            out.push_back(r);
        }
    }
    return out;
}

void require_both_labels(std::span<const RelevanceRecord> records, int item_id, const char * split_name) {
    std::size_t pos = 0;
    for (const auto & r : records) {
        pos += r.label == 1 ? 1 : 0;
    }
    if (pos == 0 || pos == records.size()) {
        throw CalibrationError("item " + std::to_string(item_id) + ": the " + split_name + " split has no " +
                               (pos == 0 ? "relevant" : "non-relevant") + " records");
    }
}

double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// Work is parallelised at the outermost level only.
std::size_t inner_workers(std::size_t) {
    return 1;
}

} // namespace

LambdaSpec LambdaSpec::parse(std::string_view text) {
    if (text == "star" || text == "lambda_star" || text == "*") {
        return {true, 0.0};
    }
    try {
        std::size_t used = 0;
        const double value = std::stod(std::string(text), &used);
        if (used != text.size() || !std::isfinite(value)) {
            throw std::invalid_argument("trailing characters");
        }
        return {false, value};
    } catch (const std::exception &) {
        throw ConfigError("invalid lambda \"" + std::string(text) + "\" (expected a number or \"star\")");
    }
}

std::string LambdaSpec::label() const {
    return star ? "star" : num(value);
}

void ExperimentConfig::validate() const {
    if (model_source == ModelSource::bridge && bridge_command.empty()) {
        throw ConfigError("model.command is required for the bridge source");
    }
    if (model_source == ModelSource::bridge && (relevance_path.empty() || users_path.empty())) {
        throw ConfigError("data.relevance and data.users are required for the bridge source");
    }
    if (bridge_encoding != "json" && bridge_encoding != "f32le") {
        throw ConfigError("model.encoding must be \"json\" or \"f32le\"");
    }
    SyntheticConfig s = synthetic;
    s.seed = seed;
    s.validate();
    split.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("calibration.alpha must lie in (0, 1)");
    }
    try {
        grid.validate();
    } catch (const InvalidArgument & e) {
        throw ConfigError(std::string("calibration.grid: ") + e.what());
    }
    if (layer && *layer < 1) {
        throw ConfigError("calibration.layer must be positive");
    }
    if (eval_lambdas.empty()) {
        throw ConfigError("evaluation.lambdas must not be empty");
    }
    retrieval.validate();
    if (embed_dim == 0) {
        throw ConfigError("retrieval.embed_dim must be positive");
    }
    templates.validate();
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error & e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(doc, "config",
               {"seed", "output_dir", "workers", "model", "synthetic", "data", "split", "calibration", "evaluation",
                "questionnaire", "retrieval", "templates"});
    ExperimentConfig c;
    read(doc, "seed", c.seed, "config");
    std::string out_dir = c.output_dir.string();
    read(doc, "output_dir", out_dir, "config");
    c.output_dir = out_dir;
    read(doc, "workers", c.workers, "config");

    if (auto it = doc.find("model"); it != doc.end()) {
        check_keys(*it, "model", {"source", "command", "encoding"});
        std::string source = "synthetic";
        read(*it, "source", source, "model");
        if (source == "bridge") {
            c.model_source = ModelSource::bridge;
        } else if (source != "synthetic") {
            throw ConfigError("model.source must be \"synthetic\" or \"bridge\"");
        }
        read(*it, "command", c.bridge_command, "model");
        read(*it, "encoding", c.bridge_encoding, "model");
    }
    if (auto it = doc.find("synthetic"); it != doc.end()) {
        auto & s = c.synthetic;
        check_keys(*it, "synthetic",
                   {"n_records", "relevant_fraction", "signal_strength", "noise_std", "cautious_bias", "n_users",
                    "filler_posts", "words_per_post", "num_layers", "hidden_dim", "num_heads", "max_seq_len"});
        read(*it, "n_records", s.n_records, "synthetic");
        read(*it, "relevant_fraction", s.relevant_fraction, "synthetic");
        read(*it, "signal_strength", s.signal_strength, "synthetic");
        read(*it, "noise_std", s.noise_std, "synthetic");
        read(*it, "cautious_bias", s.cautious_bias, "synthetic");
        read(*it, "n_users", s.n_users, "synthetic");
        read(*it, "filler_posts", s.filler_posts, "synthetic");
        read(*it, "words_per_post", s.words_per_post, "synthetic");
        read(*it, "num_layers", s.num_layers, "synthetic");
        read(*it, "hidden_dim", s.hidden_dim, "synthetic");
        read(*it, "num_heads", s.num_heads, "synthetic");
        read(*it, "max_seq_len", s.max_seq_len, "synthetic");
    }
    if (auto it = doc.find("data"); it != doc.end()) {
        check_keys(*it, "data", {"relevance", "users", "fields"});
        std::string rel, users;
        read(*it, "relevance", rel, "data");
        read(*it, "users", users, "data");
        c.relevance_path = rel;
        c.users_path = users;
        if (auto f = it->find("fields"); f != it->end()) {
            check_keys(*f, "data.fields", {"post_id", "item_id", "text", "label", "user_id", "posts", "bdi"});
            read(*f, "post_id", c.fields.post_id, "data.fields");
            read(*f, "item_id", c.fields.item_id, "data.fields");
            read(*f, "text", c.fields.text, "data.fields");
            read(*f, "label", c.fields.label, "data.fields");
            read(*f, "user_id", c.fields.user_id, "data.fields");
            read(*f, "posts", c.fields.posts, "data.fields");
            read(*f, "bdi", c.fields.bdi, "data.fields");
        }
    }
    if (auto it = doc.find("split"); it != doc.end()) {
        check_keys(*it, "split", {"fractions", "stratify"});
        std::vector<double> fractions;
        read(*it, "fractions", fractions, "split");
        if (!fractions.empty()) {
            if (fractions.size() != 3) {
                throw ConfigError("split.fractions must hold three values (train, validation, test)");
            }
            c.split.fractions = {fractions[0], fractions[1], fractions[2]};
        }
        read(*it, "stratify", c.split.stratify, "split");
    }
    if (auto it = doc.find("calibration"); it != doc.end()) {
        check_keys(*it, "calibration", {"mode", "alpha", "grid", "layer"});
        std::string mode(to_string(c.mode));
        read(*it, "mode", mode, "calibration");
        c.mode = parse_calibration_mode(mode);
        read(*it, "alpha", c.alpha, "calibration");
        if (auto g = it->find("grid"); g != it->end()) {
            check_keys(*g, "calibration.grid", {"min", "max", "step"});
            read(*g, "min", c.grid.min, "calibration.grid");
            read(*g, "max", c.grid.max, "calibration.grid");
            read(*g, "step", c.grid.step, "calibration.grid");
        }
        if (auto l = it->find("layer"); l != it->end() && !l->is_null()) {
            int layer = 0;
            read(*it, "layer", layer, "calibration");
            c.layer = layer;
        }
    }
    if (auto it = doc.find("evaluation"); it != doc.end()) {
        check_keys(*it, "evaluation", {"lambdas"});
        if (auto l = it->find("lambdas"); l != it->end()) {
            if (!l->is_array()) {
                throw ConfigError("evaluation.lambdas must be an array");
            }
            c.eval_lambdas.clear();
            for (const auto & v : *l) {
                if (v.is_number()) {
                    c.eval_lambdas.push_back({false, v.get<double>()});
                } else if (v.is_string()) {
                    c.eval_lambdas.push_back(LambdaSpec::parse(v.get<std::string>()));
                } else {
                    throw ConfigError("evaluation.lambdas entries must be numbers or \"star\"");
                }
            }
        }
    }
    if (auto it = doc.find("questionnaire"); it != doc.end()) {
        check_keys(*it, "questionnaire", {"fixed_lambdas"});
        read(*it, "fixed_lambdas", c.questionnaire_lambdas, "questionnaire");
    }
    if (auto it = doc.find("retrieval"); it != doc.end()) {
        check_keys(*it, "retrieval", {"strategy", "k_min", "k_max", "fixed_k", "threshold", "query", "embed_dim"});
        std::string strategy(to_string(c.retrieval.strategy));
        read(*it, "strategy", strategy, "retrieval");
        c.retrieval.strategy = parse_top_k_strategy(strategy);
        read(*it, "k_min", c.retrieval.k_min, "retrieval");
        read(*it, "k_max", c.retrieval.k_max, "retrieval");
        read(*it, "fixed_k", c.retrieval.fixed_k, "retrieval");
        read(*it, "threshold", c.retrieval.threshold, "retrieval");
        std::string query = "keyword";
        read(*it, "query", query, "retrieval");
        if (query == "name") {
            c.retrieval.query = QueryText::name;
        } else if (query != "keyword") {
            throw ConfigError("retrieval.query must be \"keyword\" or \"name\"");
        }
        read(*it, "embed_dim", c.embed_dim, "retrieval");
    }
    if (auto it = doc.find("templates"); it != doc.end()) {
        check_keys(*it, "templates", {"relevance", "questionnaire"});
        read(*it, "relevance", c.templates.relevance, "templates");
        read(*it, "questionnaire", c.templates.questionnaire, "templates");
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const fs::path & path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError & e) {
        throw ConfigError(e.what());
    }
    return parse_experiment_config(text);
}

std::string serialize_experiment_config(const ExperimentConfig & c) {
    ojson doc;
    doc["seed"] = c.seed;
    doc["model"] = {{"source", to_string(c.model_source)}, {"command", c.bridge_command},
                    {"encoding", c.bridge_encoding}};
    const auto & s = c.synthetic;
    doc["synthetic"] = {{"n_records", s.n_records},       {"relevant_fraction", s.relevant_fraction},
                        {"signal_strength", s.signal_strength}, {"noise_std", s.noise_std},
                        {"cautious_bias", s.cautious_bias}, {"n_users", s.n_users},
                        {"filler_posts", s.filler_posts}, {"words_per_post", s.words_per_post},
                        {"num_layers", s.num_layers},     {"hidden_dim", s.hidden_dim},
                        {"num_heads", s.num_heads},       {"max_seq_len", s.max_seq_len}};
    doc["data"] = {{"relevance", c.relevance_path.string()},
                   {"users", c.users_path.string()},
                   {"fields",
                    {{"post_id", c.fields.post_id},
                     {"item_id", c.fields.item_id},
                     {"text", c.fields.text},
                     {"label", c.fields.label},
                     {"user_id", c.fields.user_id},
                     {"posts", c.fields.posts},
                     {"bdi", c.fields.bdi}}}};
    doc["split"] = {{"fractions", c.split.fractions}, {"stratify", c.split.stratify}};
    doc["calibration"] = {{"mode", to_string(c.mode)},
                          {"alpha", c.alpha},
                          {"grid", {{"min", c.grid.min}, {"max", c.grid.max}, {"step", c.grid.step}}},
                          {"layer", c.layer ? ojson(*c.layer) : ojson(nullptr)}};
    ojson lambdas = ojson::array();
    for (const auto & l : c.eval_lambdas) {
        lambdas.push_back(l.star ? ojson("star") : ojson(l.value));
    }
    doc["evaluation"] = {{"lambdas", lambdas}};
    doc["questionnaire"] = {{"fixed_lambdas", c.questionnaire_lambdas}};
    doc["retrieval"] = {{"strategy", to_string(c.retrieval.strategy)},
                        {"k_min", c.retrieval.k_min},
                        {"k_max", c.retrieval.k_max},
                        {"fixed_k", c.retrieval.fixed_k},
                        {"threshold", c.retrieval.threshold},
                        {"query", to_string(c.retrieval.query)},
                        {"embed_dim", c.embed_dim}};
    doc["templates"] = {{"relevance", c.templates.relevance}, {"questionnaire", c.templates.questionnaire}};
    return doc.dump(2) + "\n";
}

RunContext load_context(const ExperimentConfig & config, bool need_corpus, bool need_users, std::ostream & log) {
    config.validate();
    RunContext ctx;
    SyntheticConfig synthetic = config.synthetic;
    synthetic.seed = config.seed;

    if (config.model_source == ModelSource::bridge) {
        auto client = std::make_shared<WireClient>(config.bridge_command);
        auto remote = std::make_shared<RemoteModel>(client, config.bridge_encoding);
        if (remote->embed_dim() > 0) {
            ctx.embedder = std::make_shared<RemoteEmbedder>(client, remote->embed_dim());
        }
        ctx.model = std::move(remote);
    }

    const bool generate = (need_corpus && config.relevance_path.empty()) || (need_users && config.users_path.empty());
    std::optional<SyntheticWorld> world;
    if (generate) {
        log << "generating synthetic world (seed " << config.seed << ")\n";
        world = generate_synthetic(synthetic);
    }
    if (!ctx.model) {
        ctx.model = world ? world->model : std::make_shared<const ToyModel>(build_planted_model(synthetic));
    }
    if (!ctx.embedder) {
        ctx.embedder = std::make_shared<ToyEmbedder>(config.embed_dim, derive_seed(config.seed, "embedder"));
    }
    if (need_corpus) {
        ctx.corpus = config.relevance_path.empty() ? world->corpus
                                                   : load_relevance_corpus(config.relevance_path, config.fields, &log);
    }
    if (need_users) {
        ctx.users = config.users_path.empty() ? world->users : load_user_histories(config.users_path, config.fields);
    }
    return ctx;
}

CalibrationSummary run_calibration(const ExperimentConfig & config, const RunContext & ctx, std::ostream & log) {
    const LanguageModel & model = *ctx.model;
    const int layer = config.layer.value_or(model.config().intervention_layer());
    if (layer > model.config().num_layers) {
        throw ConfigError("calibration.layer " + std::to_string(layer) + " exceeds the model depth " +
                          std::to_string(model.config().num_layers));
    }
    SplitSpec spec = config.split;
    spec.seed = derive_seed(config.seed, "split");
    const CorpusSplit parts = split(ctx.corpus, spec);
    log << "split: " << parts.train.size() << " train, " << parts.val.size() << " validation, " << parts.test.size()
        << " test\n";

    CalibrationOptions options;
    options.alpha = config.alpha;
    options.grid = config.grid;

    const std::size_t workers = config.workers == 0 ? worker_count() : config.workers;
    options.workers = inner_workers(workers);
    CalibrationSummary summary;
    summary.items.resize(static_cast<std::size_t>(kItemCount));
    parallel_for(
        static_cast<std::size_t>(kItemCount),
        [&](std::size_t j) {
            const int item_id = static_cast<int>(j) + 1;
            const auto train = of_item(parts.train, item_id);
            const auto val = of_item(parts.val, item_id);
            require_both_labels(train, item_id, "training");
            require_both_labels(val, item_id, "validation");

            const auto train_pairs = build_contrast_pairs(model, train, item_id, config.templates);
            const auto reps = extract_representations(model, train_pairs, layer, options.workers);
            ItemCalibration & out = summary.items[j];
            out.n_train = train.size();
            out.n_validation = val.size();
            out.artifact.vector = compute_steering_vector(reps);
            out.artifact.hyperplane =
                fit_hyperplane(reps, {.seed = derive_seed(config.seed, static_cast<std::uint64_t>(item_id))});

            const auto val_pairs = build_contrast_pairs(model, val, item_id, config.templates);
            std::vector<LabeledPrompt> val_positive;
            std::copy_if(val_pairs.begin(), val_pairs.end(), std::back_inserter(val_positive),
                         [](const LabeledPrompt & p) { return p.polarity == Polarity::positive; });
            if (config.mode == CalibrationMode::hyperplane_proxy) {
                const auto val_reps = extract_representations(model, val_positive, layer, options.workers);
                out.artifact.calibration =
                    calibrate_strength(out.artifact.vector, out.artifact.hyperplane, val_reps, options);
            } else {
                out.artifact.calibration = calibrate_strength(out.artifact.vector, model, val_positive, options);
            }
        },
        workers);

    std::ostringstream csv;
    csv << "item_id,item_name,lambda_star,achieved_accuracy,target_unreached,vector_norm,n_positive,n_negative,"
           "hyperplane_train_accuracy,hyperplane_degenerate,n_train,n_validation\n";
    std::vector<double> stars;
    for (const auto & item : summary.items) {
        const auto & a = item.artifact;
        save_steering_artifact(config.output_dir / "vectors" / item_file(a.vector.item_id), a);
        csv << a.vector.item_id << ',' << bdi_item(a.vector.item_id).name << ',' << num(a.calibration.lambda_star)
            << ',' << num(a.calibration.achieved_accuracy) << ',' << (a.calibration.target_unreached ? 1 : 0) << ','
            << num(a.vector.norm) << ',' << a.vector.n_positive << ',' << a.vector.n_negative << ','
            << num(a.hyperplane.train_accuracy) << ',' << (a.hyperplane.degenerate ? 1 : 0) << ',' << item.n_train
            << ',' << item.n_validation << '\n';
        stars.push_back(a.calibration.lambda_star);
        if (a.calibration.target_unreached) {
            log << "warning: item " << a.vector.item_id << " did not reach the accuracy target (best "
                << num(a.calibration.achieved_accuracy) << ")\n";
        }
    }
    write_file_atomic(config.output_dir / "calibration_summary.csv", csv.str());

    double mean = 0.0;
    for (const double s : stars) {
        mean += s / static_cast<double>(stars.size());
    }
    std::ostringstream dist;
    dist << "statistic,lambda_star\n"
         << "min," << num(quantile(stars, 0.0)) << "\nq1," << num(quantile(stars, 0.25)) << "\nmedian,"
         << num(quantile(stars, 0.5)) << "\nq3," << num(quantile(stars, 0.75)) << "\nmax," << num(quantile(stars, 1.0))
         << "\nmean," << num(mean) << '\n';
    write_file_atomic(config.output_dir / "calibration_distribution.csv", dist.str());
    log << "calibrated 21 items; lambda* median " << num(quantile(stars, 0.5)) << " (range "
        << num(quantile(stars, 0.0)) << " to " << num(quantile(stars, 1.0)) << ")\n";
    return summary;
}

std::map<int, SteeringArtifact> load_vectors(const fs::path & output_dir) {
    std::map<int, SteeringArtifact> out;
    for (int item_id = 1; item_id <= kItemCount; ++item_id) {
        const fs::path path = output_dir / "vectors" / item_file(item_id);
        if (!fs::exists(path)) {
            throw DataError("missing steering vector " + path.string() + "; run `steercal calibrate` first");
        }
        auto artifact = load_steering_artifact(path);
        if (artifact.vector.item_id != item_id) {
            throw DataError(path.string() + " holds item " + std::to_string(artifact.vector.item_id));
        }
        out.emplace(item_id, std::move(artifact));
    }
    return out;
}

RelevanceSummary run_relevance_eval(const ExperimentConfig & config, const RunContext & ctx, std::ostream & log) {
    const LanguageModel & model = *ctx.model;
    const auto vectors = load_vectors(config.output_dir);
    SplitSpec spec = config.split;
    spec.seed = derive_seed(config.seed, "split");
    const std::vector<RelevanceRecord> test = split(ctx.corpus, spec).test;

    std::vector<LambdaSpec> lambdas = config.eval_lambdas;
    const LambdaSpec zero{false, 0.0};
    if (std::find(lambdas.begin(), lambdas.end(), zero) == lambdas.end()) {
        lambdas.push_back(zero);
    }
    auto strength = [&](const LambdaSpec & l, int item_id) {
        return l.star ? vectors.at(item_id).calibration.lambda_star : l.value;
    };

    struct Row {
        std::vector<OptionDecision> decisions;  // per lambda
        double base_margin = 0.0;               // proxy margin of the correct-answer prompt at lambda = 0
    };
    std::vector<Row> rows(test.size());
    const std::size_t workers = config.workers == 0 ? worker_count() : config.workers;
    parallel_for(
        test.size(),
        [&](std::size_t i) {
            const auto & r = test[i];
            const auto & artifact = vectors.at(r.item_id);
            const BdiItem & item = bdi_item(r.item_id);
            const TokenSequence prompt = relevance_prompt(model, r.text, item, config.templates);
            const TokenId options[] = {model.option_token(0), model.option_token(1)};
            for (const auto & l : lambdas) {
                rows[i].decisions.push_back(
                    decide(model, prompt, options, AppliedSteering::from(artifact.vector, strength(l, r.item_id))));
            }
            TokenSequence answered = prompt;
            answered.tokens.push_back(model.option_token(r.label));
            answered.answer_position = answered.tokens.size() - 1;
            const int capture[] = {artifact.vector.layer};
            const auto fwd = forward_with_activations(model, answered, std::nullopt, capture);
            rows[i].base_margin = artifact.hyperplane.margin(fwd.captured.front().states.row(*answered.answer_position));
        },
        workers);

    std::vector<int> truth;
    for (const auto & r : test) {
        truth.push_back(r.label);
    }
    RelevanceSummary summary;
    std::vector<ConfusionMatrix> matrices;
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        std::vector<int> preds;
        std::ostringstream logits;
        logits << "post_id,item_id,gold_label,predicted,lambda,logit_0,logit_1,logit_diff,proxy_margin\n";
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto & d = rows[i].decisions[k];
            const auto & artifact = vectors.at(test[i].item_id);
            const double lambda = strength(lambdas[k], test[i].item_id);
            const double margin =
                rows[i].base_margin + lambda * dot(artifact.hyperplane.weights, artifact.vector.vector);
            preds.push_back(d.label);
            logits << test[i].post_id << ',' << test[i].item_id << ',' << test[i].label << ',' << d.label << ','
                   << num(lambda) << ',' << num(d.option_logits[0]) << ',' << num(d.option_logits[1]) << ','
                   << num(d.option_logits[1] - d.option_logits[0]) << ',' << num(margin) << '\n';
        }
        matrices.push_back(confusion(preds, truth));
        if (k < config.eval_lambdas.size()) {
            const std::string label = "lambda_" + lambdas[k].label() + ".csv";
            write_file_atomic(config.output_dir / "confusion" / label, confusion_to_csv(matrices.back()));
            write_file_atomic(config.output_dir / "logits" / label, logits.str());
            summary.results.push_back({lambdas[k], matrices.back()});
        }
        if (lambdas[k] == zero) {
            summary.baseline = matrices.back();
        }
    }

    auto change = [](std::size_t before, std::size_t after) {
        return before == 0 ? std::string("NA")
                           : num(relative_change(static_cast<double>(before), static_cast<double>(after)));
    };
    std::ostringstream rel;
    rel << "lambda,tp,fn,fp,tn,relevant_accuracy,non_relevant_accuracy,tp_change_pct,tn_change_pct\n";
    for (const auto & r : summary.results) {
        const auto & m = r.confusion;
        rel << r.lambda.label() << ',' << m.tp << ',' << m.fn << ',' << m.fp << ',' << m.tn << ','
            << num(m.relevant_accuracy()) << ',' << num(m.non_relevant_accuracy()) << ','
            << change(summary.baseline.tp, m.tp) << ',' << change(summary.baseline.tn, m.tn) << '\n';
    }
    write_file_atomic(config.output_dir / "relative_change.csv", rel.str());
    for (const auto & r : summary.results) {
        log << "lambda " << r.lambda.label() << ": relevant accuracy " << format_percent(r.confusion.relevant_accuracy())
            << ", non-relevant accuracy " << format_percent(r.confusion.non_relevant_accuracy()) << '\n';
    }
    return summary;
}

QuestionnaireSummary run_questionnaire_eval(const ExperimentConfig & config, const RunContext & ctx,
                                            std::ostream & log) {
    const LanguageModel & model = *ctx.model;
    const auto vectors = load_vectors(config.output_dir);
    const auto items = bind_option_tokens(bdi_catalogue(), model);

    std::vector<const UserHistory *> users;
    for (const auto & u : ctx.users) {
        if (u.true_sheet) {
            users.push_back(&u);
        } else {
            log << "warning: user " << u.user_id << " has no true sheet; excluded\n";
        }
    }
    if (users.empty()) {
        throw DataError("no user with a true questionnaire sheet");
    }

    std::vector<std::pair<std::string, SteeringSet>> variants;
    variants.emplace_back("unsteered", SteeringSet{});
    SteeringSet steered;
    for (const auto & [id, a] : vectors) {
        steered.emplace(id, AppliedSteering::from(a.vector, a.calibration.lambda_star));
    }
    variants.emplace_back("steered", std::move(steered));
    for (const double lambda : config.questionnaire_lambdas) {
        SteeringSet fixed;
        for (const auto & [id, a] : vectors) {
            fixed.emplace(id, AppliedSteering::from(a.vector, lambda));
        }
        variants.emplace_back("lambda_" + num(lambda), std::move(fixed));
    }

    QuestionnaireSummary summary;
    for (const auto * u : users) {
        summary.truth.push_back(*u->true_sheet);
    }
    const std::size_t workers = config.workers == 0 ? worker_count() : config.workers;
    ojson metrics_doc;
    metrics_doc["columns"] = {"DCHR", "ADODL", "AHR", "ACR"};
    std::ostringstream csv;
    csv << "variant,DCHR,ADODL,AHR,ACR,n_users\n";
    for (auto & [name, set] : variants) {
        const ItemScorer scorer = model_scorer(model, set, config.templates);
        std::vector<AnswerSheet> sheets(users.size());
        std::vector<QuestionnaireTrace> traces(users.size());
        parallel_for(
            users.size(),
            [&](std::size_t u) {
                sheets[u] = complete_questionnaire(*users[u], items, scorer, *ctx.embedder, config.retrieval,
                                                   &traces[u], inner_workers(workers));
            },
            workers);
        const MetricReport report = compute_metrics(sheets, summary.truth);

        ojson sheet_doc = ojson::array();
        for (std::size_t u = 0; u < sheets.size(); ++u) {
            std::vector<std::size_t> k_star;
            for (const auto & r : traces[u].retrievals) {
                k_star.push_back(r.k_star);
            }
            sheet_doc.push_back({{"user_id", sheets[u].user_id()},
                                 {"scores", sheets[u].scores()},
                                 {"total", sheets[u].total()},
                                 {"category", to_string(sheets[u].category())},
                                 {"k_star", k_star}});
        }
        write_file_atomic(config.output_dir / "sheets" / (name + ".json"), sheet_doc.dump(2) + "\n");
        metrics_doc["variants"][name] = {{"DCHR", report.dchr},
                                         {"ADODL", report.adodl},
                                         {"AHR", report.ahr},
                                         {"ACR", report.acr},
                                         {"n_users", report.n_users}};
        csv << name << ',' << format_percent(report.dchr) << ',' << format_percent(report.adodl) << ','
            << format_percent(report.ahr) << ',' << format_percent(report.acr) << ',' << report.n_users << '\n';
        log << name << ":\n" << metrics_to_table(report);
        summary.reports.emplace_back(name, report);
        summary.sheets.emplace_back(name, std::move(sheets));
    }
    metrics_doc["formulas"] = json::parse(metrics_to_json(MetricReport{}))["formulas"];
    write_file_atomic(config.output_dir / "metrics.json", metrics_doc.dump(2) + "\n");
    write_file_atomic(config.output_dir / "metrics.csv", csv.str());
    return summary;
}

void run_gen_synthetic(const ExperimentConfig & config, std::ostream & log) {
    SyntheticConfig synthetic = config.synthetic;
    synthetic.seed = config.seed;
    const SyntheticWorld world = generate_synthetic(synthetic);
    save_relevance_corpus(config.output_dir / "relevance.ndjson", world.corpus);
    save_user_histories(config.output_dir / "users.ndjson", world.users);
    log << "wrote " << world.corpus.size() << " relevance records and " << world.users.size() << " users to "
        << config.output_dir.string() << "; planted false-positive rate of the ideal reader "
        << format_percent(world.bayes_false_positive_rate()) << '\n';
}

std::string run_report(const ExperimentConfig & config) {
    std::ostringstream out;
    const auto section = [&](const char * title, const fs::path & file) {
        const fs::path path = config.output_dir / file;
        if (!fs::exists(path)) {
            return;
        }
        out << "== " << title << " (" << file.string() << ")\n";
        std::istringstream in(read_file(path));
        std::vector<std::vector<std::string>> rows;
        std::vector<std::size_t> widths;
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::string cell;
            auto & cells = rows.emplace_back();
            while (std::getline(row, cell, ',')) {
                if (widths.size() <= cells.size()) {
                    widths.push_back(0);
                }
                widths[cells.size()] = std::max(widths[cells.size()], cell.size());
                cells.push_back(std::move(cell));
            }
        }
        for (const auto & cells : rows) {
            std::string text;
            for (std::size_t c = 0; c < cells.size(); ++c) {
                text += cells[c];
                if (c + 1 < cells.size()) {
                    text.append(widths[c] + 2 - cells[c].size(), ' ');
                }
            }
            out << text << '\n';
        }
        out << '\n';
    };
    section("Calibration", "calibration_summary.csv");
    section("Lambda* distribution", "calibration_distribution.csv");
    section("Relevance by steering strength", "relative_change.csv");
    section("Questionnaire metrics", "metrics.csv");
    if (out.str().empty()) {
        throw DataError("no artifacts found in " + config.output_dir.string());
    }
    return out.str();
}

void write_manifest(const ExperimentConfig & config) {
    const std::string config_text = serialize_experiment_config(config);
    write_file_atomic(config.output_dir / "config.json", config_text);

    std::vector<std::string> files;
    for (const auto & entry : fs::recursive_directory_iterator(config.output_dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const std::string rel = fs::relative(entry.path(), config.output_dir).generic_string();
        if (rel == "manifest.json" || rel.find(".staging-") != std::string::npos) {
            continue;
        }
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    ojson artifacts = ojson::object();
    for (const auto & rel : files) {
        artifacts[rel] = sha256_hex(read_file(config.output_dir / rel));
    }
    ojson manifest;
    manifest["tool"] = "steercal";
    manifest["format"] = 1;
    manifest["seed"] = config.seed;
    manifest["config_sha256"] = sha256_hex(config_text);
    manifest["artifacts"] = artifacts;
    write_file_atomic(config.output_dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace steercal
