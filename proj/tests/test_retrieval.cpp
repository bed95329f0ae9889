#include "steercal/bdi.hpp"
#include "steercal/error.hpp"
#include "steercal/retrieval.hpp"
#include "steercal/synthetic.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace steercal;

namespace {

RetrievalConfig window(std::size_t k_min, std::size_t k_max) {
    RetrievalConfig c;
    c.k_min = k_min;
    c.k_max = k_max;
    return c;
}

// Exhaustive gap scan used as the reference rule.
std::size_t gap_oracle(const std::vector<double> & s, std::size_t k_min, std::size_t k_max) {
    if (s.empty()) {
        return 0;
    }
    if (s.size() < k_min) {
        return s.size();
    }
    std::size_t best = k_min;
    double best_gap = -1;
    for (std::size_t k = k_min; k <= std::min(k_max, s.size()); ++k) {
        const double gap = k == s.size() ? 0.0 : s[k - 1] - s[k];
        if (gap > best_gap) {
            best_gap = gap;
            best = k;
        }
    }
    return best;
}

// Embedder that returns fixed vectors for known texts.
class TableEmbedder final : public EmbeddingProvider {
public:
    explicit TableEmbedder(std::map<std::string, Vector> table) : table_(std::move(table)) {}
    std::size_t dim() const override { return 3; }
    Vector embed(std::string_view text) const override {
        auto it = table_.find(std::string(text));
        if (it == table_.end()) {
            throw DataError("no embedding for \"" + std::string(text) + "\"");
        }
        return it->second;
    }

private:
    std::map<std::string, Vector> table_;
};

} // namespace

TEST(Similarity, Examples) {
    EXPECT_NEAR(similarity(Vector{0.3, 0.4}, Vector{0.3, 0.4}), 1.0, 1e-15);
    EXPECT_EQ(similarity(Vector{1, 0}, Vector{0, 1}), 0.0);
    EXPECT_NEAR(similarity(Vector{1, 0}, Vector{1, 1}), 0.70710678, 1e-8);
    EXPECT_THROW(similarity(Vector{0, 0}, Vector{1, 1}), InvalidArgument);
    EXPECT_THROW(similarity(Vector{1}, Vector{1, 1}), InvalidArgument);
}

TEST(Similarity, SymmetricAndBounded) {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const auto a = steercal::test::random_vector(rng, 7), b = steercal::test::random_vector(rng, 7);
        const double s = similarity(a, b);
        EXPECT_EQ(s, similarity(b, a));
        EXPECT_LE(std::abs(s), 1.0);
    }
}

TEST(AdaptiveTopK, GapFixture) {
    const std::vector<double> s{0.90, 0.88, 0.85, 0.40, 0.38};
    EXPECT_EQ(adaptive_top_k(s, window(1, 4)), 3u);
}

TEST(AdaptiveTopK, FewerThanKMinKeepsAll) {
    EXPECT_EQ(adaptive_top_k(std::vector<double>{0.5, 0.4}, window(3, 5)), 2u);
}

TEST(AdaptiveTopK, AllEqualGivesKMin) {
    EXPECT_EQ(adaptive_top_k(std::vector<double>(8, 0.3), window(2, 6)), 2u);
}

TEST(AdaptiveTopK, EmptyGivesZero) {
    EXPECT_EQ(adaptive_top_k(std::vector<double>{}, window(1, 4)), 0u);
}

TEST(AdaptiveTopK, MatchesOracleAndStaysInWindow) {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> s(rng.below(15));
        for (auto & x : s) {
            x = std::round(rng.uniform(-1, 1) * 16) / 16;  // dyadic grid: ties survive the shift exactly
        }
        std::sort(s.rbegin(), s.rend());
        const std::size_t k_min = 1 + rng.below(4), k_max = k_min + rng.below(8);
        const auto k = adaptive_top_k(s, window(k_min, k_max));
        EXPECT_EQ(k, gap_oracle(s, k_min, k_max));
        EXPECT_LE(k, std::min(k_max, s.size()));
        if (s.size() >= k_min) {
            EXPECT_GE(k, k_min);
        }
        // Shifting every score by a constant keeps the selection.
        auto shifted = s;
        for (auto & x : shifted) {
            x += 0.125;
        }
        EXPECT_EQ(adaptive_top_k(shifted, window(k_min, k_max)), k);
    }
}

TEST(AdaptiveTopK, OtherStrategies) {
    RetrievalConfig fixed = window(1, 10);
    fixed.strategy = TopKStrategy::fixed_k;
    fixed.fixed_k = 3;
    EXPECT_EQ(adaptive_top_k(std::vector<double>{0.9, 0.8, 0.7, 0.6}, fixed), 3u);
    EXPECT_EQ(adaptive_top_k(std::vector<double>{0.9, 0.8}, fixed), 2u);
    RetrievalConfig thresh = window(1, 10);
    thresh.strategy = TopKStrategy::threshold;
    thresh.threshold = 0.65;
    EXPECT_EQ(adaptive_top_k(std::vector<double>{0.9, 0.8, 0.7, 0.6}, thresh), 3u);
    thresh.threshold = 0.95;
    EXPECT_EQ(adaptive_top_k(std::vector<double>{0.9, 0.8, 0.7, 0.6}, thresh), 1u);
    EXPECT_EQ(parse_top_k_strategy("fixed_k"), TopKStrategy::fixed_k);
    EXPECT_THROW(parse_top_k_strategy("density"), ConfigError);
}

TEST(RetrievalConfig, Validation) {
    EXPECT_NO_THROW(RetrievalConfig{}.validate());
    EXPECT_THROW(window(0, 3).validate(), ConfigError);
    EXPECT_THROW(window(4, 3).validate(), ConfigError);
}

TEST(ToyEmbedder, UnitNormAndDeterministic) {
    const ToyEmbedder a(128, 9), b(128, 9);
    for (const char * text : {"hello world", "sad sad sad", "x"}) {
        const auto v = a.embed(text);
        EXPECT_NEAR(norm2(v), 1.0, 1e-6);
        EXPECT_EQ(v, b.embed(text));
        EXPECT_EQ(v, a.embed(text));  // served from the cache
    }
    EXPECT_THROW(a.embed(""), Error);
}

TEST(Retrieve, SinglePostSelected) {
    const ToyEmbedder e(64, 1);
    const UserHistory user{"u", {"only post here"}, std::nullopt};
    const auto r = retrieve(user, bdi_item(1), e);
    EXPECT_EQ(r.k_star, 1u);
    ASSERT_EQ(r.selected.size(), 1u);
    EXPECT_EQ(r.selected[0].post_index, 0u);
}

TEST(Retrieve, PlantedRelevantPostsSelected) {
    const std::string query = query_text(bdi_item(1), QueryText::keyword);
    std::map<std::string, Vector> table{{query, {1, 0, 0}}};
    std::vector<std::string> posts;
    for (int i = 0; i < 10; ++i) {
        posts.push_back("post " + std::to_string(i));
        const bool relevant = i == 2 || i == 7;
        table[posts.back()] = relevant ? Vector{0.95, 0.1 * i, 0} : Vector{0.1, 0, 1.0 + 0.05 * i};
    }
    const TableEmbedder e(table);
    const auto r = retrieve(UserHistory{"u", posts, std::nullopt}, bdi_item(1), e);
    std::set<std::size_t> got;
    for (const auto & p : r.selected) {
        got.insert(p.post_index);
    }
    EXPECT_EQ(got, (std::set<std::size_t>{2, 7}));
}

TEST(Retrieve, SyntheticItemPostsRankFirst) {
    const auto w = generate_synthetic(SyntheticConfig{});
    const ToyEmbedder e(512, 0);
    std::size_t exact = 0, total = 0;
    for (std::size_t u = 0; u < w.users.size(); ++u) {
        const EmbeddedUser embedded(w.users[u], e, 1);
        for (int j = 1; j <= kItemCount; ++j) {
            const auto r = retrieve(embedded, bdi_item(j), e);
            std::set<std::size_t> got, want(w.item_posts[u][static_cast<std::size_t>(j - 1)].begin(),
                                            w.item_posts[u][static_cast<std::size_t>(j - 1)].end());
            for (const auto & p : r.selected) {
                got.insert(p.post_index);
            }
            exact += got == want ? 1 : 0;
            ++total;
        }
    }
    EXPECT_GE(static_cast<double>(exact) / static_cast<double>(total), 0.95);
}

TEST(Retrieve, DeterministicAndCacheTransparent) {
    const UserHistory user{"u", {"i cry a lot", "went to the shop", "cannot sleep at night", "crying again"}, {}};
    const ToyEmbedder e(256, 4);
    const auto a = retrieve(user, bdi_item(10), e);
    const auto b = retrieve(user, bdi_item(10), e);
    const auto c = retrieve(EmbeddedUser(user, ToyEmbedder(256, 4), 1), bdi_item(10), ToyEmbedder(256, 4));
    for (const auto * r : {&b, &c}) {
        EXPECT_EQ(r->k_star, a.k_star);
        ASSERT_EQ(r->selected.size(), a.selected.size());
        for (std::size_t i = 0; i < a.selected.size(); ++i) {
            EXPECT_EQ(r->selected[i].post_index, a.selected[i].post_index);
            EXPECT_EQ(r->selected[i].similarity, a.selected[i].similarity);
        }
    }
    for (std::size_t i = 1; i < a.selected.size(); ++i) {
        EXPECT_GE(a.selected[i - 1].similarity, a.selected[i].similarity);
    }
}

TEST(Retrieve, ProviderFailureNamesPost) {
    const TableEmbedder e({{"known", {1, 0, 0}}});
    try {
        EmbeddedUser(UserHistory{"u", {"known", "unknown"}, {}}, e, 1);
        FAIL();
    } catch (const DataError & ex) {
        EXPECT_NE(std::string(ex.what()).find("post 1"), std::string::npos);
    }
}

TEST(Retrieve, EmptyHistorySelectsNothing) {
    const ToyEmbedder e(64, 1);
    const auto r = retrieve(UserHistory{"u", {}, {}}, bdi_item(3), e);
    EXPECT_EQ(r.k_star, 0u);
    EXPECT_TRUE(r.selected.empty());
}

TEST(QueryText, KeywordOrName) {
    EXPECT_EQ(query_text(bdi_item(1), QueryText::name), "Sadness");
    EXPECT_EQ(query_text(bdi_item(1), QueryText::keyword), bdi_item(1).keyword);
}
