#include "steercal/steering.hpp"

#include "steercal/error.hpp"
#include "steercal/io.hpp"
#include "steercal/parallel.hpp"
#include "steercal/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace steercal {

using nlohmann::json;

namespace {

// Objective ties closer than this are treated as equal so that the smaller
// lambda wins even when 0.99 - 0.98 and 1.00 - 0.99 differ in the last bit.
constexpr double kObjectiveTie = 1e-12;
constexpr double kDegenerateTolerance = 1e-6;
constexpr double kMinVectorNorm = 1e-12;

void require_dim(std::size_t got, std::size_t want, const char * what) {
    if (got != want) {
        throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(got) + " vs " +
                              std::to_string(want) + ")");
    }
}

void check_calibration_inputs(const SteeringVector & v, const CalibrationOptions & options) {
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
        throw InvalidArgument("calibrate_strength: alpha must lie in (0, 1)");
    }
    options.grid.validate();
    if (v.vector.empty() || norm2(v.vector) < kMinVectorNorm) {
        throw CalibrationError("item " + std::to_string(v.item_id) +
                               ": steering vector is degenerate (norm below 1e-12); refusing to calibrate");
    }
}

} // namespace

std::string_view to_string(CalibrationMode mode) {
    return mode == CalibrationMode::full_model ? "full_model" : "hyperplane_proxy";
}

CalibrationMode parse_calibration_mode(std::string_view name) {
    if (name == "hyperplane_proxy") {
        return CalibrationMode::hyperplane_proxy;
    }
    if (name == "full_model") {
        return CalibrationMode::full_model;
    }
    throw ConfigError("unknown calibration mode \"" + std::string(name) + "\"");
}

void LambdaGrid::validate() const {
    if (!std::isfinite(min) || !std::isfinite(max) || !std::isfinite(step)) {
        throw InvalidArgument("lambda grid bounds must be finite");
    }
    if (min > max) {
        throw InvalidArgument("lambda grid: min " + std::to_string(min) + " exceeds max " + std::to_string(max));
    }
    if (!(step > 0.0)) {
        throw InvalidArgument("lambda grid: step must be positive");
    }
}

std::vector<double> LambdaGrid::points() const {
    validate();
    const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = min + static_cast<double>(i) * step;
    }
    return out;
}

SteeringVector compute_steering_vector(const RepresentationSet & reps) {
    reps.validate();
    const std::size_t d = reps.vectors.cols();
    Vector pos_sum(d, 0.0), neg_sum(d, 0.0);
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const auto row = reps.vectors.row(i);
        auto & target = reps.polarities[i] == Polarity::positive ? pos_sum : neg_sum;
        (reps.polarities[i] == Polarity::positive ? n_pos : n_neg) += 1;
        for (std::size_t c = 0; c < d; ++c) {
            target[c] += row[c];
        }
    }
    if (n_pos == 0) {
        throw CalibrationError("item " + std::to_string(reps.item_id) + ": positive class is empty");
    }
    if (n_neg == 0) {
        throw CalibrationError("item " + std::to_string(reps.item_id) + ": negative class is empty");
    }
    SteeringVector v;
    v.item_id = reps.item_id;
    v.layer = reps.layer;
    v.vector.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        v.vector[c] = pos_sum[c] / static_cast<double>(n_pos) - neg_sum[c] / static_cast<double>(n_neg);
    }
    v.norm = norm2(v.vector);
    v.n_positive = n_pos;
    v.n_negative = n_neg;
    return v;
}

Hyperplane fit_hyperplane(const RepresentationSet & reps, const HyperplaneOptions & options) {
    reps.validate();
    const std::size_t n = reps.size();
    if (n < 2) {
        throw InvalidArgument("fit_hyperplane: need at least 2 rows, got " + std::to_string(n));
    }
    const std::size_t n_pos = reps.count(Polarity::positive);
    if (n_pos == 0 || n_pos == n) {
        throw InvalidArgument("fit_hyperplane: both classes must be present");
    }
    const std::size_t d = reps.vectors.cols();

    // Dual coordinate descent on the hinge-loss SVM; the bias is learned as the
    // weight of an appended constant feature.
    std::vector<double> y(n), q_diag(n), alpha(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = reps.polarities[i] == Polarity::positive ? 1.0 : -1.0;
        q_diag[i] = dot(reps.vectors.row(i), reps.vectors.row(i)) + 1.0;
    }
    Vector w(d, 0.0);
    double b = 0.0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(options.seed, "hyperplane"));

    for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
        rng.shuffle(order);
        double pg_max = -INFINITY, pg_min = INFINITY;
        for (const std::size_t i : order) {
            const auto x = reps.vectors.row(i);
            const double g = y[i] * (dot(w, x) + b) - 1.0;
            double pg = g;
            if (alpha[i] <= 0.0) {
                pg = std::min(g, 0.0);
            } else if (alpha[i] >= options.c) {
                pg = std::max(g, 0.0);
            }
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (std::abs(pg) > 1e-12) {
                const double old = alpha[i];
                alpha[i] = std::clamp(old - g / q_diag[i], 0.0, options.c);
                const double delta = (alpha[i] - old) * y[i];
                for (std::size_t c = 0; c < d; ++c) {
                    w[c] += delta * x[c];
                }
                b += delta;
            }
        }
        if (pg_max - pg_min < options.tolerance) {
            break;
        }
    }

    Hyperplane h;
    h.weights = std::move(w);
    h.bias = b;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool predicted_positive = h.margin(reps.vectors.row(i)) > 0.0;
        correct += predicted_positive == (y[i] > 0.0) ? 1 : 0;
    }
    h.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    h.degenerate = h.train_accuracy <= 0.5 + kDegenerateTolerance;
    return h;
}

CalibrationResult select_lambda(int item_id, std::vector<GridPoint> grid, double alpha, CalibrationMode mode) {
    if (grid.empty()) {
        throw InvalidArgument("select_lambda: empty grid");
    }
    const double target = 1.0 - alpha;
    std::size_t best = 0;
    double best_distance = std::abs(grid[0].accuracy - target);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double distance = std::abs(grid[i].accuracy - target);
        if (distance < best_distance - kObjectiveTie) {
            best = i;
            best_distance = distance;
        }
    }
    CalibrationResult r;
    r.item_id = item_id;
    r.lambda_star = grid[best].lambda;
    r.achieved_accuracy = grid[best].accuracy;
    r.alpha = alpha;
    r.mode = mode;
    r.target_unreached = best_distance > alpha + kObjectiveTie;
    r.grid = std::move(grid);
    return r;
}

CalibrationResult calibrate_strength(const SteeringVector & v, const Hyperplane & surface,
                                     const RepresentationSet & validation, const CalibrationOptions & options) {
    check_calibration_inputs(v, options);
    validation.validate();
    require_dim(surface.weights.size(), v.vector.size(), "calibrate_strength");
    require_dim(validation.vectors.cols(), v.vector.size(), "calibrate_strength");

    std::vector<double> base;
    for (std::size_t i = 0; i < validation.size(); ++i) {
        if (validation.polarities[i] == Polarity::positive) {
            base.push_back(surface.margin(validation.vectors.row(i)));
        }
    }
    if (base.empty()) {
        throw CalibrationError("item " + std::to_string(v.item_id) + ": validation set has no positive representations");
    }
    const double wv = dot(surface.weights, v.vector);
    const auto lambdas = options.grid.points();
    std::vector<GridPoint> grid(lambdas.size());
    parallel_for(
        lambdas.size(),
        [&](std::size_t k) {
            std::size_t correct = 0;
            for (const double m0 : base) {
                correct += m0 + lambdas[k] * wv > 0.0 ? 1 : 0;
            }
            grid[k] = {lambdas[k], static_cast<double>(correct) / static_cast<double>(base.size())};
        },
        options.workers);
    return select_lambda(v.item_id, std::move(grid), options.alpha, CalibrationMode::hyperplane_proxy);
}

CalibrationResult calibrate_strength(const SteeringVector & v, const LanguageModel & model,
                                     std::span<const LabeledPrompt> validation, const CalibrationOptions & options) {
    check_calibration_inputs(v, options);
    require_dim(static_cast<std::size_t>(model.config().hidden_dim), v.vector.size(), "calibrate_strength");

    std::vector<LabeledPrompt> positives;
    for (const auto & p : validation) {
        if (p.polarity == Polarity::positive) {
            positives.push_back(p);
        }
    }
    if (positives.empty()) {
        throw CalibrationError("item " + std::to_string(v.item_id) + ": validation set has no positive prompts");
    }
    const auto prompts = strip_answers(positives);
    const TokenId options_ids[] = {model.option_token(0), model.option_token(1)};
    const auto lambdas = options.grid.points();
    const std::size_t n = prompts.size();

    std::vector<unsigned char> hit(lambdas.size() * n, 0);
    parallel_for(
        hit.size(),
        [&](std::size_t job) {
            const std::size_t k = job / n;
            const std::size_t i = job % n;
            InterventionSpec spec{v.layer, v.vector, lambdas[k], PositionPolicy::final_token_only};
            const auto result = forward_with_activations(model, prompts[i], spec, {});
            const auto probs = restricted_softmax(result.logits, options_ids);
            hit[job] = static_cast<int>(argmax_lowest(probs)) == positives[i].gold_label ? 1 : 0;
        },
        options.workers);

    std::vector<GridPoint> grid(lambdas.size());
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        const auto correct = std::accumulate(hit.begin() + static_cast<std::ptrdiff_t>(k * n),
                                             hit.begin() + static_cast<std::ptrdiff_t>((k + 1) * n), std::size_t{0});
        grid[k] = {lambdas[k], static_cast<double>(correct) / static_cast<double>(n)};
    }
    return select_lambda(v.item_id, std::move(grid), options.alpha, CalibrationMode::full_model);
}

std::vector<Vector> margin_distribution(const Hyperplane & surface, const RepresentationSet & reps,
                                        const SteeringVector & v, std::span<const double> lambdas) {
    reps.validate();
    require_dim(surface.weights.size(), v.vector.size(), "margin_distribution");
    if (reps.size() > 0) {
        require_dim(reps.vectors.cols(), v.vector.size(), "margin_distribution");
    }
    const double wv = dot(surface.weights, v.vector);
    Vector base(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
        base[i] = surface.margin(reps.vectors.row(i));
    }
    std::vector<Vector> out;
    out.reserve(lambdas.size());
    for (const double lambda : lambdas) {
        Vector margins(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            margins[i] = base[i] + lambda * wv;
        }
        out.push_back(std::move(margins));
    }
    return out;
}

std::string serialize_steering_artifact(const SteeringArtifact & a) {
    json grid = json::array();
    for (const auto & g : a.calibration.grid) {
        grid.push_back({g.lambda, g.accuracy});
    }
    const double total = static_cast<double>(a.vector.n_positive + a.vector.n_negative);
    json doc;
    doc["item_id"] = a.vector.item_id;
    doc["layer"] = a.vector.layer;
    doc["vector"] = a.vector.vector;
    doc["lambda_star"] = a.calibration.lambda_star;
    doc["alpha"] = a.calibration.alpha;
    doc["mode"] = std::string(to_string(a.calibration.mode));
    doc["provenance"] = {
        {"n_positive", a.vector.n_positive},
        {"n_negative", a.vector.n_negative},
        {"positive_fraction", total > 0 ? static_cast<double>(a.vector.n_positive) / total : 0.0},
        {"norm", a.vector.norm},
        {"hyperplane",
         {{"weights", a.hyperplane.weights},
          {"bias", a.hyperplane.bias},
          {"train_accuracy", a.hyperplane.train_accuracy},
          {"degenerate", a.hyperplane.degenerate}}},
        {"achieved_accuracy", a.calibration.achieved_accuracy},
        {"target_unreached", a.calibration.target_unreached},
        {"grid", grid},
    };
    return doc.dump(2) + "\n";
}

SteeringArtifact parse_steering_artifact(std::string_view text) {
    try {
        const json doc = json::parse(text);
        const json & prov = doc.at("provenance");
        SteeringArtifact a;
        a.vector.item_id = doc.at("item_id").get<int>();
        a.vector.layer = doc.at("layer").get<int>();
        a.vector.vector = doc.at("vector").get<Vector>();
        a.vector.norm = prov.at("norm").get<double>();
        a.vector.n_positive = prov.at("n_positive").get<std::size_t>();
        a.vector.n_negative = prov.at("n_negative").get<std::size_t>();
        const json & hp = prov.at("hyperplane");
        a.hyperplane.weights = hp.at("weights").get<Vector>();
        a.hyperplane.bias = hp.at("bias").get<double>();
        a.hyperplane.train_accuracy = hp.at("train_accuracy").get<double>();
        a.hyperplane.degenerate = hp.at("degenerate").get<bool>();
        a.calibration.item_id = a.vector.item_id;
        a.calibration.lambda_star = doc.at("lambda_star").get<double>();
        a.calibration.alpha = doc.at("alpha").get<double>();
        a.calibration.mode = parse_calibration_mode(doc.at("mode").get<std::string>());
        a.calibration.achieved_accuracy = prov.at("achieved_accuracy").get<double>();
        a.calibration.target_unreached = prov.at("target_unreached").get<bool>();
        for (const auto & g : prov.at("grid")) {
            a.calibration.grid.push_back({g.at(0).get<double>(), g.at(1).get<double>()});
        }
        return a;
    } catch (const json::exception & e) {
        throw DataError(std::string("malformed steering-vector file: ") + e.what());
    }
}

void save_steering_artifact(const std::filesystem::path & path, const SteeringArtifact & artifact) {
    write_file_atomic(path, serialize_steering_artifact(artifact));
}

SteeringArtifact load_steering_artifact(const std::filesystem::path & path) {
    try {
        return parse_steering_artifact(read_file(path));
    } catch (const DataError & e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

} // namespace steercal
