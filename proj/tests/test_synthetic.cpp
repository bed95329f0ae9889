#include "steercal/bdi.hpp"
#include "steercal/contrast.hpp"
#include "steercal/datasets.hpp"
#include "steercal/error.hpp"
#include "steercal/io.hpp"
#include "steercal/steering.hpp"
#include "steercal/synthetic.hpp"
#include "steercal/tasks.hpp"

#include <gtest/gtest.h>

using namespace steercal;

namespace {

double unsteered_false_positive_rate(const SyntheticWorld & w) {
    std::size_t negatives = 0, fp = 0;
    for (const auto & r : w.corpus) {
        if (r.label == 0) {
            ++negatives;
            fp += predict_relevance(*w.model, r.text, bdi_item(r.item_id)) == 1 ? 1 : 0;
        }
    }
    return static_cast<double>(fp) / static_cast<double>(negatives);
}

} // namespace

TEST(Synthetic, CorpusShape) {
    const auto w = generate_synthetic(SyntheticConfig{});
    EXPECT_EQ(w.corpus.size(), 2000u);
    EXPECT_EQ(w.users.size(), 40u);
    const auto counts = label_counts(w.corpus);
    EXPECT_EQ(counts.size(), 21u);
    std::size_t relevant = 0;
    for (const auto & [item, c] : counts) {
        relevant += c.relevant;
        EXPECT_GT(c.relevant, 0u);
        EXPECT_GT(c.non_relevant, 0u);
    }
    EXPECT_NEAR(static_cast<double>(relevant) / 2000.0, 0.25, 0.01);
    std::set<std::string> ids;
    for (const auto & r : w.corpus) {
        ids.insert(r.post_id);
    }
    EXPECT_EQ(ids.size(), w.corpus.size());
    for (const auto & u : w.users) {
        ASSERT_TRUE(u.true_sheet.has_value());
        EXPECT_FALSE(u.posts.empty());
    }
}

TEST(Synthetic, SameSeedBitIdentical) {
    SyntheticConfig c;
    c.seed = 12;
    const auto a = generate_synthetic(c), b = generate_synthetic(c);
    EXPECT_EQ(serialize_relevance_corpus(a.corpus), serialize_relevance_corpus(b.corpus));
    EXPECT_EQ(a.users, b.users);
    EXPECT_EQ(a.model->weights(), b.model->weights());
    c.seed = 13;
    EXPECT_NE(serialize_relevance_corpus(generate_synthetic(c).corpus), serialize_relevance_corpus(a.corpus));
}

TEST(Synthetic, DigestStableForFixedSeed) {
    // Golden digests pin the generator output; a change here means every
    // downstream artifact changes too.
    const auto w = generate_synthetic(SyntheticConfig{});
    EXPECT_EQ(sha256_hex(serialize_relevance_corpus(w.corpus)),
              "44a0c53516f13c5bd5bce3636362061a6d54bf8f601fb0316cf2fd59f2847be8");
    EXPECT_EQ(sha256_hex(serialize_user_histories(w.users)),
              "3edb3197a31bc283ffa956041bbff8ec63c043dc7a5b1fbdfe78caa1399063e9");
}

TEST(Synthetic, CautiousBiasExceedsBayesRate) {
    const auto w = generate_synthetic(SyntheticConfig{});
    const double bayes = w.bayes_false_positive_rate();
    const double unsteered = unsteered_false_positive_rate(w);
    EXPECT_GT(unsteered, bayes + 0.10) << "unsteered " << unsteered << " bayes " << bayes;
}

TEST(Synthetic, NoBiasStrongSignalIsAccurate) {
    SyntheticConfig c;
    c.cautious_bias = 0.0;
    c.signal_strength = 1.5;
    c.n_records = 420;
    const auto w = generate_synthetic(c);
    std::size_t correct = 0;
    for (const auto & r : w.corpus) {
        correct += predict_relevance(*w.model, r.text, bdi_item(r.item_id)) == r.label ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(w.corpus.size()), 0.99);
}

TEST(Synthetic, NoiselessRepresentationsSeparable) {
    SyntheticConfig c;
    c.noise_std = 0.0;
    c.n_records = 420;
    const auto w = generate_synthetic(c);
    for (const int item : {1, 11, 21}) {
        std::vector<RelevanceRecord> records;
        for (const auto & r : w.corpus) {
            if (r.item_id == item) {
                records.push_back(r);
            }
        }
        const auto pairs = build_contrast_pairs(*w.model, records, item);
        const auto reps = extract_representations(*w.model, pairs, w.model->config().intervention_layer(), 1);
        EXPECT_DOUBLE_EQ(fit_hyperplane(reps).train_accuracy, 1.0) << "item " << item;
    }
}

TEST(Synthetic, PlantedEvidenceReadsLexicon) {
    EXPECT_FALSE(word_evidence("the").has_value());
    EXPECT_EQ(planted_evidence("no lexicon words here"), 0.0);
    const auto & vocab = synthetic_vocabulary();
    for (int k = 0; k < kOptionCount; ++k) {
        EXPECT_EQ(vocab.piece(vocab.option_token(k)), std::to_string(k));
    }
}

TEST(Synthetic, InvalidConfigRejected) {
    SyntheticConfig c;
    c.relevant_fraction = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.num_layers = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.noise_std = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}
