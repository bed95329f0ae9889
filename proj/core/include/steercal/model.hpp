#pragma once

#include "steercal/tensor.hpp"
#include "steercal/vocab.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace steercal {

struct ModelConfig {
    int num_layers = 4;    // L, even so that L/2 is a layer index
    int hidden_dim = 32;   // d
    int vocab_size = 64;   // V
    int num_heads = 4;     // must divide d
    int max_seq_len = 256;
    std::uint64_t seed = 0;

    int head_dim() const noexcept { return hidden_dim / num_heads; }
    int ff_dim() const noexcept { return 4 * hidden_dim; }
    // Layer l = L/2 used for extraction and intervention.
    int intervention_layer() const noexcept { return num_layers / 2; }

    void validate() const;

    friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

struct TokenSequence {
    std::vector<TokenId> tokens;
    std::optional<std::size_t> answer_position{};

    std::size_t size() const noexcept { return tokens.size(); }
};

// Hidden states at the output of block `layer` (1-based), one row per position.
struct LayerActivations {
    int layer = 0;
    Matrix states;
};

enum class PositionPolicy { final_token_only, all_positions };

// Additive hook: after block `layer` the hidden state gains strength * vector.
struct InterventionSpec {
    int layer = 0;
    Vector vector;
    double strength = 0.0;
    PositionPolicy position_policy = PositionPolicy::final_token_only;
};

struct ForwardResult {
    Vector logits; // next-token logits after the last position (size V)
    std::vector<LayerActivations> captured; // ordered by layer
};

// Anything that can run a teacher-forced pass with an optional additive hook.
// Implementations must be safe to call concurrently from several threads.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    virtual const ModelConfig & config() const = 0;

    virtual ForwardResult forward(const TokenSequence & seq, const std::optional<InterventionSpec> & intervention,
                                  std::span<const int> capture_layers) const = 0;

    virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;

    // Single-token form of the Likert / relevance option `score` (0..3).
    virtual TokenId option_token(int score) const = 0;
};

// Throws InvalidArgument when the request violates the forward preconditions.
void validate_forward_request(const ModelConfig & config, const TokenSequence & seq,
                              const std::optional<InterventionSpec> & intervention,
                              std::span<const int> capture_layers);

Vector steer_hidden(std::span<const double> h, std::span<const double> v, double strength);

ForwardResult forward_with_activations(const LanguageModel & model, const TokenSequence & seq,
                                       const std::optional<InterventionSpec> & intervention,
                                       std::span<const int> capture_layers);

// Softmax of the logits restricted to `options`, in the order given.
Vector restricted_softmax(std::span<const double> logits, std::span<const TokenId> options);

Vector option_distribution(const LanguageModel & model, const TokenSequence & prompt,
                           std::span<const TokenId> options,
                           const std::optional<InterventionSpec> & intervention = std::nullopt);

// Index of the largest value; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

struct BlockWeights {
    Vector attn_norm_gain;           // d
    Matrix wq, wk, wv, wo;           // d x d, heads are contiguous row blocks of wq/wk/wv
    Vector mlp_norm_gain;            // d
    Matrix w_in;                     // ff x d
    Vector b_in;                     // ff
    Matrix w_out;                    // d x ff
    Vector b_out;                    // d

    friend bool operator==(const BlockWeights &, const BlockWeights &) = default;
};

struct ModelWeights {
    Matrix token_embedding;          // V x d
    Matrix position_embedding;       // max_seq_len x d
    std::vector<BlockWeights> blocks;
    Vector final_norm_gain;          // d
    Matrix unembedding;              // V x d
    Vector output_bias;              // V

    friend bool operator==(const ModelWeights &, const ModelWeights &) = default;
};

// Seeded pseudo-random initialization, fully determined by config.seed.
ModelWeights random_weights(const ModelConfig & config);

// Shape check against the config; throws InvalidArgument naming the tensor.
void validate_weights(const ModelConfig & config, const ModelWeights & weights);

// Pre-norm decoder-only transformer (RMSNorm, causal multi-head attention,
// GELU feed-forward, untied output head) evaluated in double precision with a
// fixed reduction order, so results are bit-reproducible.
class ToyModel final : public LanguageModel {
public:
    ToyModel(ModelConfig config, Vocabulary vocabulary);
    ToyModel(ModelConfig config, Vocabulary vocabulary, ModelWeights weights);

    const ModelConfig & config() const override { return config_; }
    const ModelWeights & weights() const noexcept { return weights_; }
    const Vocabulary & vocabulary() const noexcept { return vocabulary_; }

    ForwardResult forward(const TokenSequence & seq, const std::optional<InterventionSpec> & intervention,
                          std::span<const int> capture_layers) const override;

    std::vector<TokenId> tokenize(std::string_view text) const override { return vocabulary_.encode(text); }
    TokenId option_token(int score) const override { return vocabulary_.option_token(score); }

private:
    ModelConfig config_;
    Vocabulary vocabulary_;
    ModelWeights weights_;
};

} // namespace steercal
