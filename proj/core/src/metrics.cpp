#include "steercal/metrics.hpp"

#include "steercal/error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace steercal {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

MetricReport compute_metrics(std::span<const AnswerSheet> predicted, std::span<const AnswerSheet> truth) {
    if (predicted.empty()) {
        throw InvalidArgument("compute_metrics: no sheets");
    }
    if (predicted.size() != truth.size()) {
        throw InvalidArgument("compute_metrics: " + std::to_string(predicted.size()) + " predicted sheets vs " +
                              std::to_string(truth.size()) + " true sheets");
    }
    std::string offenders;
    for (std::size_t u = 0; u < predicted.size(); ++u) {
        if (predicted[u].user_id() != truth[u].user_id()) {
            offenders += (offenders.empty() ? "" : ", ") + std::to_string(u) + " (" + predicted[u].user_id() +
                         " vs " + truth[u].user_id() + ")";
        }
    }
    if (!offenders.empty()) {
        throw InvalidArgument("compute_metrics: user id mismatch at " + offenders);
    }

    std::size_t category_hits = 0;
    double level_sum = 0.0;
    std::size_t item_hits = 0;
    double closeness_sum = 0.0;
    for (std::size_t u = 0; u < predicted.size(); ++u) {
        const auto & p = predicted[u];
        const auto & t = truth[u];
        category_hits += p.category() == t.category() ? 1 : 0;
        level_sum += static_cast<double>(kMaxTotalScore - std::abs(p.total() - t.total())) / kMaxTotalScore;
        for (std::size_t j = 0; j < static_cast<std::size_t>(kItemCount); ++j) {
            const int diff = std::abs(p.scores()[j] - t.scores()[j]);
            item_hits += diff == 0 ? 1 : 0;
            closeness_sum += static_cast<double>(kMaxItemScore - diff) / kMaxItemScore;
        }
    }
    const auto n = static_cast<double>(predicted.size());
    const double cells = n * kItemCount;
    MetricReport r;
    r.n_users = predicted.size();
    r.dchr = static_cast<double>(category_hits) / n;
    r.adodl = level_sum / n;
    r.ahr = static_cast<double>(item_hits) / cells;
    r.acr = closeness_sum / cells;
    return r;
}

double ConfusionMatrix::relevant_accuracy() const noexcept {
    return ratio(tp, tp + fn);
}

double ConfusionMatrix::non_relevant_accuracy() const noexcept {
    return ratio(tn, tn + fp);
}

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) {
        throw InvalidArgument("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                              std::to_string(truth.size()) + " labels");
    }
    ConfusionMatrix m;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i];
        const int t = truth[i];
        if ((p != 0 && p != 1) || (t != 0 && t != 1)) {
            throw InvalidArgument("confusion: labels must be 0 or 1 (index " + std::to_string(i) + ")");
        }
        if (t == 1) {
            (p == 1 ? m.tp : m.fn) += 1;
        } else {
            (p == 1 ? m.fp : m.tn) += 1;
        }
    }
    return m;
}

double relative_change(double before, double after) {
    if (before == 0.0) {
        throw InvalidArgument("relative_change: baseline count is zero");
    }
    return 100.0 * (after - before) / before;
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
    return buf;
}

std::string metrics_to_json(const MetricReport & r) {
    nlohmann::ordered_json doc;
    doc["n_users"] = r.n_users;
    doc["DCHR"] = r.dchr;
    doc["ADODL"] = r.adodl;
    doc["AHR"] = r.ahr;
    doc["ACR"] = r.acr;
    doc["formulas"] = {
        {"DCHR", "fraction of users with category_of(pred_total) == category_of(true_total)"},
        {"ADODL", "mean over users of (63 - |pred_total - true_total|) / 63"},
        {"AHR", "mean over (user, item) of [pred == true]"},
        {"ACR", "mean over (user, item) of (3 - |pred - true|) / 3"},
    };
    return doc.dump(2) + "\n";
}

std::string metrics_to_csv(const MetricReport & r) {
    return "DCHR,ADODL,AHR,ACR,n_users\n" + format_percent(r.dchr) + "," + format_percent(r.adodl) + "," +
           format_percent(r.ahr) + "," + format_percent(r.acr) + "," + std::to_string(r.n_users) + "\n";
}

std::string metrics_to_table(const MetricReport & r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %-8s %-8s %-8s users\n%-8s %-8s %-8s %-8s %zu\n", "DCHR", "ADODL", "AHR",
                  "ACR", format_percent(r.dchr).c_str(), format_percent(r.adodl).c_str(),
                  format_percent(r.ahr).c_str(), format_percent(r.acr).c_str(), r.n_users);
    return buf;
}

std::string confusion_to_csv(const ConfusionMatrix & m) {
    std::ostringstream out;
    out << "truth,predicted_relevant,predicted_non_relevant\n";
    out << "relevant," << m.tp << ',' << m.fn << '\n';
    out << "non_relevant," << m.fp << ',' << m.tn << '\n';
    return out.str();
}

} // namespace steercal
