#include "steercal/error.hpp"
#include "steercal/metrics.hpp"
#include "steercal/rng.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace steercal;

namespace {

AnswerSheet sheet_with_total(const std::string & id, int total) {
    AnswerSheet::Scores s{};
    for (std::size_t i = 0; i < s.size() && total > 0; ++i) {
        s[i] = std::min(3, total);
        total -= s[i];
    }
    return AnswerSheet(id, s);
}

AnswerSheet random_sheet(Rng & rng, const std::string & id) {
    AnswerSheet::Scores s{};
    for (auto & x : s) {
        x = static_cast<int>(rng.below(4));
    }
    return AnswerSheet(id, s);
}

} // namespace

TEST(Category, QuotedBounds) {
    EXPECT_EQ(category_of(0), SeverityCategory::minimal);
    EXPECT_EQ(category_of(9), SeverityCategory::minimal);
    EXPECT_EQ(category_of(10), SeverityCategory::mild);
    EXPECT_EQ(category_of(18), SeverityCategory::mild);
    EXPECT_EQ(category_of(19), SeverityCategory::moderate);
    EXPECT_EQ(category_of(29), SeverityCategory::moderate);
    EXPECT_EQ(category_of(30), SeverityCategory::severe);
    EXPECT_EQ(category_of(63), SeverityCategory::severe);
    EXPECT_THROW(category_of(64), InvalidArgument);
    EXPECT_THROW(category_of(-1), InvalidArgument);
    EXPECT_EQ(parse_category(to_string(SeverityCategory::mild)), SeverityCategory::mild);
}

TEST(AnswerSheet, TotalAndCategoryDerived) {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto s = random_sheet(rng, "u");
        int sum = 0;
        for (const int x : s.scores()) {
            sum += x;
        }
        EXPECT_EQ(s.total(), sum);
        EXPECT_EQ(s.category(), category_of(sum));
    }
    AnswerSheet::Scores bad{};
    bad[4] = 4;
    EXPECT_THROW(AnswerSheet("u", bad), InvalidArgument);
    EXPECT_THROW(sheet_with_total("u", 3).score(22), InvalidArgument);
}

TEST(Metrics, PerfectPredictionIsOne) {
    Rng rng(2);
    std::vector<AnswerSheet> truth;
    for (int i = 0; i < 10; ++i) {
        truth.push_back(random_sheet(rng, "u" + std::to_string(i)));
    }
    const auto m = compute_metrics(truth, truth);
    EXPECT_EQ(m.dchr, 1.0);
    EXPECT_EQ(m.adodl, 1.0);
    EXPECT_EQ(m.ahr, 1.0);
    EXPECT_EQ(m.acr, 1.0);
    EXPECT_EQ(m.n_users, 10u);
}

TEST(Metrics, TotalDifferenceExample) {
    const std::vector<AnswerSheet> pred{sheet_with_total("a", 20)}, truth{sheet_with_total("a", 10)};
    const auto m = compute_metrics(pred, truth);
    EXPECT_EQ(m.dchr, 0.0);
    EXPECT_NEAR(m.adodl, 0.84127, 1e-5);
}

TEST(Metrics, SingleItemMiss) {
    AnswerSheet::Scores t{}, p{};
    t[0] = 1;
    p[0] = 3;
    const auto m = compute_metrics(std::vector{AnswerSheet("a", p)}, std::vector{AnswerSheet("a", t)});
    EXPECT_NEAR(m.ahr, 20.0 / 21.0, 1e-12);
    EXPECT_NEAR(m.acr, (20.0 + 1.0 / 3.0) / 21.0, 1e-12);
}

TEST(Metrics, MatchLoopOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(30);
        std::vector<AnswerSheet> pred, truth;
        for (std::size_t u = 0; u < n; ++u) {
            const std::string id = "u" + std::to_string(u);
            truth.push_back(random_sheet(rng, id));
            pred.push_back(rng.bernoulli(0.2) ? truth.back() : random_sheet(rng, id));
        }
        double dchr = 0, adodl = 0, ahr = 0, acr = 0;
        for (std::size_t u = 0; u < n; ++u) {
            int pt = 0, tt = 0;
            for (int j = 0; j < 21; ++j) {
                const int p = pred[u].scores()[static_cast<std::size_t>(j)];
                const int t = truth[u].scores()[static_cast<std::size_t>(j)];
                pt += p;
                tt += t;
                ahr += p == t ? 1 : 0;
                acr += (3.0 - std::abs(p - t)) / 3.0;
            }
            auto cat = [](int total) { return total <= 9 ? 0 : total <= 18 ? 1 : total <= 29 ? 2 : 3; };
            dchr += cat(pt) == cat(tt) ? 1 : 0;
            adodl += (63.0 - std::abs(pt - tt)) / 63.0;
        }
        const auto m = compute_metrics(pred, truth);
        EXPECT_NEAR(m.dchr, dchr / n, 1e-12);
        EXPECT_NEAR(m.adodl, adodl / n, 1e-12);
        EXPECT_NEAR(m.ahr, ahr / (21.0 * n), 1e-12);
        EXPECT_NEAR(m.acr, acr / (21.0 * n), 1e-12);
    }
}

TEST(Metrics, PropertiesHold) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(10);
        std::vector<AnswerSheet> pred, truth;
        for (std::size_t u = 0; u < n; ++u) {
            const std::string id = "u" + std::to_string(u);
            truth.push_back(random_sheet(rng, id));
            pred.push_back(rng.bernoulli(0.5) ? truth.back() : random_sheet(rng, id));
        }
        const auto m = compute_metrics(pred, truth);
        for (const double x : {m.dchr, m.adodl, m.ahr, m.acr}) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
        EXPECT_EQ(m.acr == 1.0, m.ahr == 1.0);
        if (m.ahr == 1.0) {
            EXPECT_EQ(m.dchr, 1.0);
        }
        bool totals_equal = true;
        for (std::size_t u = 0; u < n; ++u) {
            totals_equal = totals_equal && pred[u].total() == truth[u].total();
        }
        EXPECT_EQ(m.adodl == 1.0, totals_equal);

        // Permuting users leaves every metric unchanged.
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        std::vector<AnswerSheet> pp, tp;
        for (const auto i : order) {
            pp.push_back(pred[i]);
            tp.push_back(truth[i]);
        }
        const auto q = compute_metrics(pp, tp);
        EXPECT_NEAR(q.dchr, m.dchr, 1e-12);
        EXPECT_NEAR(q.adodl, m.adodl, 1e-12);
        EXPECT_NEAR(q.ahr, m.ahr, 1e-12);
        EXPECT_NEAR(q.acr, m.acr, 1e-12);
    }
}

TEST(Metrics, Errors) {
    const std::vector<AnswerSheet> a{sheet_with_total("a", 1), sheet_with_total("b", 1)};
    const std::vector<AnswerSheet> b{sheet_with_total("a", 1), sheet_with_total("c", 1)};
    EXPECT_THROW(compute_metrics({}, {}), InvalidArgument);
    EXPECT_THROW(compute_metrics(a, std::span(a).first(1)), InvalidArgument);
    try {
        compute_metrics(a, b);
        FAIL();
    } catch (const InvalidArgument & e) {
        EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
    }
}

TEST(Confusion, Counts) {
    std::vector<int> t(20), p;
    for (int i = 0; i < 20; ++i) {
        t[static_cast<std::size_t>(i)] = i < 10 ? 1 : 0;
    }
    EXPECT_EQ(confusion(t, t), (ConfusionMatrix{10, 0, 0, 10}));
    std::vector<int> truth(20, 0), all_one(20, 1);
    std::fill(truth.begin(), truth.begin() + 5, 1);
    const auto m = confusion(all_one, truth);
    EXPECT_EQ(m.tp, 5u);
    EXPECT_EQ(m.fp, 15u);
    EXPECT_EQ(m.total(), 20u);
    EXPECT_THROW(confusion(std::vector<int>{1}, std::vector<int>{1, 0}), InvalidArgument);
    EXPECT_THROW(confusion(std::vector<int>{2}, std::vector<int>{1}), InvalidArgument);
}

TEST(Confusion, MatchesCountingOracle) {
    Rng rng(6);
    std::vector<int> p(500), t(500);
    ConfusionMatrix oracle;
    for (std::size_t i = 0; i < 500; ++i) {
        p[i] = static_cast<int>(rng.below(2));
        t[i] = static_cast<int>(rng.below(2));
        if (t[i] == 1) {
            (p[i] == 1 ? oracle.tp : oracle.fn) += 1;
        } else {
            (p[i] == 1 ? oracle.fp : oracle.tn) += 1;
        }
    }
    const auto m = confusion(p, t);
    EXPECT_EQ(m, oracle);
    EXPECT_NEAR(m.relevant_accuracy(), static_cast<double>(oracle.tp) / (oracle.tp + oracle.fn), 1e-15);
    EXPECT_EQ(ConfusionMatrix{}.relevant_accuracy(), 0.0);
}

TEST(RelativeChange, QuotedDeltas) {
    EXPECT_NEAR(relative_change(4345, 5136), 18.2, 0.1);
    EXPECT_GT(relative_change(4345, 5136), 18.0);
    EXPECT_NEAR(relative_change(849, 830), -2.24, 0.01);
    EXPECT_NEAR(relative_change(849, 322), -62.07, 0.01);
    EXPECT_THROW(relative_change(0, 5), InvalidArgument);
}

TEST(Report, Formatting) {
    EXPECT_EQ(format_percent(0.4875), "48.75%");
    EXPECT_EQ(format_percent(1.0), "100.00%");
    const MetricReport r{0.4875, 0.8363, 0.3423, 0.7101, 2};
    const auto doc = nlohmann::ordered_json::parse(metrics_to_json(r));
    std::vector<std::string> keys;
    for (const auto & [k, _] : doc.items()) {
        if (k != "n_users" && k != "formulas") {
            keys.push_back(k);
        }
    }
    EXPECT_EQ(keys, (std::vector<std::string>{"DCHR", "ADODL", "AHR", "ACR"}));
    EXPECT_TRUE(doc["formulas"].contains("ADODL"));
    EXPECT_NE(metrics_to_csv(r).find("48.75%,83.63%,34.23%,71.01%"), std::string::npos);
    EXPECT_NE(metrics_to_table(r).find("48.75%"), std::string::npos);
    EXPECT_EQ(confusion_to_csv({1, 2, 3, 4}),
              "truth,predicted_relevant,predicted_non_relevant\nrelevant,1,2\nnon_relevant,3,4\n");
}
