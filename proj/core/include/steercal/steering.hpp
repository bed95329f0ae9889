#pragma once

#include "steercal/contrast.hpp"
#include "steercal/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace steercal {

struct SteeringVector {
    int item_id = 0;
    int layer = 0;
    Vector vector;
    double norm = 0.0;
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
};

// Linear decision proxy: a representation e is classified positive when
// w.e + b > 0.
struct Hyperplane {
    Vector weights;
    double bias = 0.0;
    double train_accuracy = 0.0;
    bool degenerate = false;

    double margin(std::span<const double> e) const { return dot(weights, e) + bias; }
};

enum class CalibrationMode { hyperplane_proxy, full_model };

std::string_view to_string(CalibrationMode mode);
CalibrationMode parse_calibration_mode(std::string_view name);

// lambda_i = min + i * step for every i with lambda_i <= max.
struct LambdaGrid {
    double min = 0.0;
    double max = 5.0;
    double step = 0.05;

    // Throws InvalidArgument when min > max or step <= 0.
    void validate() const;
    std::vector<double> points() const;
};

struct GridPoint {
    double lambda = 0.0;
    double accuracy = 0.0;
};

struct CalibrationResult {
    int item_id = 0;
    double lambda_star = 0.0;
    double achieved_accuracy = 0.0;
    double alpha = 0.01;
    std::vector<GridPoint> grid;  // increasing lambda
    CalibrationMode mode = CalibrationMode::hyperplane_proxy;
    bool target_unreached = false;
};

struct CalibrationOptions {
    double alpha = 0.01;
    LambdaGrid grid;
    std::size_t workers = 0;
};

struct HyperplaneOptions {
    double c = 1.0;                 // hinge-loss penalty
    std::size_t max_epochs = 1000;
    double tolerance = 1e-4;        // projected-gradient stopping gap
    std::uint64_t seed = 0;
};

// Difference of class centroids, mean(positive rows) - mean(negative rows).
SteeringVector compute_steering_vector(const RepresentationSet & reps);

// Max-margin linear separator (L2-regularized hinge loss) fit by dual
// coordinate descent with a seeded visiting order and a fixed epoch budget.
Hyperplane fit_hyperplane(const RepresentationSet & reps, const HyperplaneOptions & options = {});

// Hyperplane-proxy calibration: accuracy(lambda) is the fraction of positive
// rows of `validation` with w.(e + lambda v) + b > 0.
CalibrationResult calibrate_strength(const SteeringVector & v, const Hyperplane & surface,
                                     const RepresentationSet & validation, const CalibrationOptions & options = {});

// Full-model calibration: accuracy(lambda) is the fraction of positive prompts
// whose steered constrained decode returns the gold label.
CalibrationResult calibrate_strength(const SteeringVector & v, const LanguageModel & model,
                                     std::span<const LabeledPrompt> validation, const CalibrationOptions & options = {});

// Chooses lambda* from per-lambda accuracies: the smallest lambda minimizing
// |accuracy - (1 - alpha)|. Shared by both calibration modes.
CalibrationResult select_lambda(int item_id, std::vector<GridPoint> grid, double alpha, CalibrationMode mode);

// margins[k][i] = (w.e_i + b) + lambdas[k] * (w.v).
std::vector<Vector> margin_distribution(const Hyperplane & surface, const RepresentationSet & reps,
                                        const SteeringVector & v, std::span<const double> lambdas);

// One calibrated item as persisted on disk.
struct SteeringArtifact {
    SteeringVector vector;
    Hyperplane hyperplane;
    CalibrationResult calibration;
};

std::string serialize_steering_artifact(const SteeringArtifact & artifact);
SteeringArtifact parse_steering_artifact(std::string_view text);
void save_steering_artifact(const std::filesystem::path & path, const SteeringArtifact & artifact);
SteeringArtifact load_steering_artifact(const std::filesystem::path & path);

} // namespace steercal
