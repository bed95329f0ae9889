#pragma once

#include "steercal/bdi.hpp"
#include "steercal/datasets.hpp"
#include "steercal/model.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

namespace steercal {

// Knobs of the planted-truth testbed. Every output is a pure function of this
// struct, so a config plus seed reproduces model, corpus and cohort exactly.
struct SyntheticConfig {
    std::uint64_t seed = 0;

    // Relevance corpus: n_records posts spread evenly over the 21 items.
    std::size_t n_records = 2000;
    double relevant_fraction = 0.25;
    double signal_strength = 0.5;   // latent evidence is 0.5 +/- signal_strength
    double noise_std = 0.2;         // std of the per-post latent noise
    double cautious_bias = 1.6;     // logit added per option step (toward "1" / higher scores)

    // Questionnaire cohort.
    std::size_t n_users = 40;
    std::size_t filler_posts = 10;  // off-topic posts per user

    std::size_t words_per_post = 8;

    int num_layers = 4;
    int hidden_dim = 32;
    int num_heads = 4;
    int max_seq_len = 256;

    // Throws ConfigError on out-of-range values.
    void validate() const;
};

// Fixed vocabulary of the synthetic world (independent of the seed): option
// tokens, the answer cue, an evidence lexicon whose words carry planted
// evidence levels, off-topic filler words, item keywords and the words of the
// default templates and item catalogue.
const Vocabulary & synthetic_vocabulary();

// Evidence carried by one word of the lexicon, or nullopt for other words.
std::optional<double> word_evidence(std::string_view word);

// Mean planted evidence over the evidence words of a text (0 when none).
double planted_evidence(std::string_view text);

// Decoder whose weights read the mean evidence of the post into the residual
// stream, compare it against a threshold shifted by cautious_bias and expose
// both to an output head carrying the same cautious offset.
ToyModel build_planted_model(const SyntheticConfig & config);

struct SyntheticWorld {
    std::shared_ptr<const ToyModel> model;
    std::vector<RelevanceRecord> corpus;
    std::vector<UserHistory> users;
    // item_posts[u][j] lists the posts of user u written about item j + 1.
    std::vector<std::array<std::vector<std::size_t>, kItemCount>> item_posts;

    // Fraction of non-relevant records whose planted evidence exceeds the
    // unbiased decision threshold 0.5, i.e. the error of the ideal reader.
    double bayes_false_positive_rate() const;
};

SyntheticWorld generate_synthetic(const SyntheticConfig & config);

} // namespace steercal
