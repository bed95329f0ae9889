#pragma once

#include "steercal/sheet.hpp"

#include <cstddef>
#include <span>
#include <string>

namespace steercal {

// eRisk questionnaire metrics, each in [0, 1].
//   DCHR  = fraction of users whose predicted severity category is correct
//   ADODL = mean over users of (63 - |pred_total - true_total|) / 63
//   AHR   = mean over all (user, item) cells of [pred == true]
//   ACR   = mean over all (user, item) cells of (3 - |pred - true|) / 3
struct MetricReport {
    double dchr = 0.0;
    double adodl = 0.0;
    double ahr = 0.0;
    double acr = 0.0;
    std::size_t n_users = 0;
};

// Sheets are aligned by position and must carry matching user ids. Throws
// InvalidArgument on empty input, unequal lengths, or id mismatches (all
// offending positions are listed).
MetricReport compute_metrics(std::span<const AnswerSheet> predicted, std::span<const AnswerSheet> truth);

struct ConfusionMatrix {
    std::size_t tp = 0;  // relevant predicted relevant
    std::size_t fn = 0;  // relevant predicted non-relevant
    std::size_t fp = 0;  // non-relevant predicted relevant
    std::size_t tn = 0;  // non-relevant predicted non-relevant

    std::size_t total() const noexcept { return tp + fn + fp + tn; }
    // Per-class accuracies; 0 when the class is absent.
    double relevant_accuracy() const noexcept;
    double non_relevant_accuracy() const noexcept;

    friend bool operator==(const ConfusionMatrix &, const ConfusionMatrix &) = default;
};

// Labels are 1 (relevant) or 0 (non-relevant).
ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> truth);

// Signed percentage 100 * (after - before) / before. Throws InvalidArgument
// when before is 0.
double relative_change(double before, double after);

// "48.75%" style: value in [0, 1] rendered as a percentage with 2 decimals.
std::string format_percent(double fraction);

// Column order: DCHR, ADODL, AHR, ACR.
std::string metrics_to_json(const MetricReport & report);
std::string metrics_to_csv(const MetricReport & report);
std::string metrics_to_table(const MetricReport & report);

std::string confusion_to_csv(const ConfusionMatrix & m);

} // namespace steercal
