#include "steercal/error.hpp"
#include "steercal/model.hpp"
#include "steercal/parallel.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace steercal;
using steercal::test::random_sequence;
using steercal::test::random_vector;
using steercal::test::small_model;

TEST(SteerHidden, ZeroStrengthIsIdentity) {
    const Vector h{1, 2}, v{1, -1};
    EXPECT_EQ(steer_hidden(h, v, 0.0), h);
}

TEST(SteerHidden, ComponentwiseArithmetic) {
    EXPECT_EQ(steer_hidden(Vector{1, 2}, Vector{1, -1}, 2.0), (Vector{3, 0}));
}

TEST(SteerHidden, MatchesScalarLoop) {
    Rng rng(11);
    const Vector h = random_vector(rng, 8), v = random_vector(rng, 8);
    const Vector out = steer_hidden(h, v, 0.5);
    for (std::size_t i = 0; i < 8; ++i) {
        const double expected = h[i] + 0.5 * v[i];
        EXPECT_EQ(out[i], expected);
    }
}

TEST(SteerHidden, DimensionMismatchThrows) {
    EXPECT_THROW(steer_hidden(Vector{1, 2}, Vector{1}, 1.0), InvalidArgument);
}

TEST(Forward, ZeroStrengthBitIdenticalToNoIntervention) {
    const ToyModel model = small_model();
    Rng rng(3);
    const int layers[] = {1, 2, 3, 4};
    for (int trial = 0; trial < 20; ++trial) {
        const auto seq = random_sequence(rng, model.config(), 1 + rng.below(20));
        InterventionSpec spec{2, random_vector(rng, 16, 3.0), 0.0, PositionPolicy::final_token_only};
        const auto base = forward_with_activations(model, seq, std::nullopt, layers);
        const auto zero = forward_with_activations(model, seq, spec, layers);
        EXPECT_EQ(base.logits, zero.logits);
        ASSERT_EQ(base.captured.size(), zero.captured.size());
        for (std::size_t k = 0; k < base.captured.size(); ++k) {
            EXPECT_EQ(base.captured[k].states, zero.captured[k].states);
        }
    }
}

TEST(Forward, RepeatedCallsAreIdentical) {
    const ToyModel model = small_model();
    Rng rng(5);
    const auto seq = random_sequence(rng, model.config(), 12);
    const int layers[] = {2};
    const auto a = forward_with_activations(model, seq, std::nullopt, layers);
    const auto b = forward_with_activations(model, seq, std::nullopt, layers);
    EXPECT_EQ(a.logits, b.logits);
    EXPECT_EQ(a.captured[0].states, b.captured[0].states);
}

TEST(Forward, BasisInterventionShiftsFinalRowOnly) {
    const ToyModel model = small_model();
    Rng rng(9);
    const auto seq = random_sequence(rng, model.config(), 10);
    const int layer = model.config().intervention_layer();
    const int capture[] = {layer};
    Vector e1(16, 0.0);
    e1[0] = 1.0;
    const auto base = forward_with_activations(model, seq, std::nullopt, capture);
    const auto steered =
        forward_with_activations(model, seq, InterventionSpec{layer, e1, 1.0, PositionPolicy::final_token_only}, capture);
    const auto & b = base.captured[0].states;
    const auto & s = steered.captured[0].states;
    const std::size_t last = seq.size() - 1;
    for (std::size_t r = 0; r < seq.size(); ++r) {
        for (std::size_t c = 0; c < 16; ++c) {
            const double expected = (r == last && c == 0) ? 1.0 : 0.0;
            EXPECT_NEAR(s(r, c) - b(r, c), expected, 1e-12) << "row " << r << " col " << c;
        }
    }
    EXPECT_NE(base.logits, steered.logits);
}

TEST(Forward, CapturedSteeredStateEqualsSteerHidden) {
    const ToyModel model = small_model();
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const auto seq = random_sequence(rng, model.config(), 2 + rng.below(15));
        const int capture[] = {2};
        const Vector v = random_vector(rng, 16);
        const double lambda = rng.uniform(-3, 3);
        const auto base = forward_with_activations(model, seq, std::nullopt, capture);
        const auto steered = forward_with_activations(
            model, seq, InterventionSpec{2, v, lambda, PositionPolicy::final_token_only}, capture);
        const std::size_t last = seq.size() - 1;
        const Vector expected = steer_hidden(base.captured[0].states.row(last), v, lambda);
        const auto row = steered.captured[0].states.row(last);
        EXPECT_EQ(Vector(row.begin(), row.end()), expected);
    }
}

TEST(Forward, AllPositionsPolicySteersEveryRow) {
    const ToyModel model = small_model();
    Rng rng(4);
    const auto seq = random_sequence(rng, model.config(), 6);
    const int capture[] = {1};
    const Vector v = random_vector(rng, 16);
    const auto base = forward_with_activations(model, seq, std::nullopt, capture);
    const auto steered =
        forward_with_activations(model, seq, InterventionSpec{1, v, 0.5, PositionPolicy::all_positions}, capture);
    for (std::size_t r = 0; r < seq.size(); ++r) {
        const Vector expected = steer_hidden(base.captured[0].states.row(r), v, 0.5);
        const auto row = steered.captured[0].states.row(r);
        EXPECT_EQ(Vector(row.begin(), row.end()), expected);
    }
}

TEST(Forward, IdenticalAcrossThreadCounts) {
    const ToyModel model = small_model();
    Rng rng(8);
    std::vector<TokenSequence> seqs;
    for (int i = 0; i < 16; ++i) {
        seqs.push_back(random_sequence(rng, model.config(), 3 + rng.below(20)));
    }
    auto run = [&](std::size_t workers) {
        std::vector<Vector> out(seqs.size());
        parallel_for(seqs.size(), [&](std::size_t i) { out[i] = model.forward(seqs[i], std::nullopt, {}).logits; },
                     workers);
        return out;
    };
    EXPECT_EQ(run(1), run(4));
}

TEST(Forward, RejectsInvalidRequests) {
    const ToyModel model = small_model();
    const int bad_layer[] = {5};
    EXPECT_THROW(model.forward(TokenSequence{}, std::nullopt, {}), InvalidArgument);
    EXPECT_THROW(model.forward(TokenSequence{{1, 2}}, std::nullopt, bad_layer), InvalidArgument);
    EXPECT_THROW(model.forward(TokenSequence{{99}}, std::nullopt, {}), InvalidArgument);
    EXPECT_THROW(model.forward(TokenSequence{std::vector<TokenId>(model.config().max_seq_len + 1, 1)}, std::nullopt, {}), InvalidArgument);
    EXPECT_THROW(model.forward(TokenSequence{{1, 2}, 2}, std::nullopt, {}), InvalidArgument);
    EXPECT_THROW(model.forward(TokenSequence{{1}}, InterventionSpec{2, Vector(3, 0.0), 1.0}, {}), InvalidArgument);
    EXPECT_THROW(model.forward(TokenSequence{{1}}, InterventionSpec{0, Vector(16, 0.0), 1.0}, {}), InvalidArgument);
}

TEST(ModelConfig, Validation) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    c.num_layers = 3;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = {};
    c.num_heads = 5;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = {};
    c.vocab_size = 3;
    EXPECT_THROW(c.validate(), InvalidArgument);
    EXPECT_EQ(ModelConfig{}.intervention_layer(), 2);
}

TEST(Weights, ShapeMismatchNamesTensor) {
    ModelConfig c;
    auto w = random_weights(c);
    w.output_bias.pop_back();
    try {
        validate_weights(c, w);
        FAIL() << "expected InvalidArgument";
    } catch (const InvalidArgument & e) {
        EXPECT_NE(std::string(e.what()).find("output_bias"), std::string::npos);
    }
}

TEST(Weights, SeededInitializationIsReproducible) {
    ModelConfig c;
    c.seed = 42;
    EXPECT_EQ(random_weights(c), random_weights(c));
    ModelConfig d = c;
    d.seed = 43;
    EXPECT_NE(random_weights(c), random_weights(d));
}

namespace {

// Model whose logits equal the output bias: every unembedding row is zero.
ToyModel bias_only_model(const Vector & bias) {
    ModelConfig c;
    c.hidden_dim = 8;
    c.num_heads = 2;
    c.vocab_size = static_cast<int>(bias.size());
    auto w = random_weights(c);
    w.unembedding = Matrix(bias.size(), 8, 0.0);
    w.output_bias = bias;
    return ToyModel(c, Vocabulary::minimal(bias.size()), w);
}

} // namespace

TEST(OptionDistribution, EqualLogitsAreUniform) {
    const ToyModel model = bias_only_model(Vector(8, 0.25));
    const TokenId opts[] = {0, 1};
    const Vector p = option_distribution(model, TokenSequence{{4, 5}}, opts);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(OptionDistribution, SingleOptionIsCertain) {
    const ToyModel model = small_model();
    const TokenId opts[] = {3};
    EXPECT_EQ(option_distribution(model, TokenSequence{{4, 5}}, opts), Vector{1.0});
}

TEST(OptionDistribution, LogThreeGapGivesThreeToOne) {
    Vector bias(8, 0.0);
    bias[0] = std::log(3.0);
    const ToyModel model = bias_only_model(bias);
    const TokenId opts[] = {0, 1};
    const Vector p = option_distribution(model, TokenSequence{{5}}, opts);
    EXPECT_NEAR(p[0], 0.75, 1e-6);
    EXPECT_NEAR(p[1], 0.25, 1e-6);
}

TEST(OptionDistribution, DuplicateOptionsThrow) {
    const ToyModel model = small_model();
    const TokenId opts[] = {1, 1};
    EXPECT_THROW(option_distribution(model, TokenSequence{{4}}, opts), InvalidArgument);
    EXPECT_THROW(option_distribution(model, TokenSequence{{4}}, {}), InvalidArgument);
}

TEST(RestrictedSoftmax, InvariantUnderConstantShift) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Vector logits = random_vector(rng, 10, 4.0);
        const TokenId opts[] = {0, 3, 7, 9};
        const Vector p = restricted_softmax(logits, opts);
        const double shift = rng.uniform(-50, 50);
        for (auto & l : logits) {
            l += shift;
        }
        const Vector q = restricted_softmax(logits, opts);
        double sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_NEAR(p[i], q[i], 1e-12);
            sum += p[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(ArgmaxLowest, TiesGoToLowestIndex) {
    EXPECT_EQ(argmax_lowest(Vector{1, 3, 3, 2}), 1u);
    EXPECT_EQ(argmax_lowest(Vector{0, 0, 0, 0}), 0u);
    EXPECT_THROW(argmax_lowest(Vector{}), InvalidArgument);
}
