#include "steercal/model.hpp"

#include "steercal/error.hpp"
#include "steercal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>

namespace steercal {

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kBlockInitStd = 0.02;

void rms_norm(std::span<const double> x, std::span<const double> gain, std::span<double> out) {
    double sum_sq = 0.0;
    for (const double v : x) {
        sum_sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sum_sq / static_cast<double>(x.size()) + kNormEps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * inv * gain[i];
    }
}

double gelu(double x) {
    constexpr double k = 0.7978845608028654; // sqrt(2 / pi)
    return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

void fill_normal(Rng & rng, Matrix & m, double stddev) {
    for (double & v : m.data()) {
        v = rng.normal(0.0, stddev);
    }
}

void expect_shape(const Matrix & m, std::size_t rows, std::size_t cols, const std::string & name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw InvalidArgument("weights: " + name + " has shape " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
}

void expect_size(const Vector & v, std::size_t size, const std::string & name) {
    if (v.size() != size) {
        throw InvalidArgument("weights: " + name + " has size " + std::to_string(v.size()) + ", expected " +
                              std::to_string(size));
    }
}

} // namespace

void ModelConfig::validate() const {
    if (num_layers <= 0 || num_layers % 2 != 0) {
        throw InvalidArgument("num_layers must be a positive even integer, got " + std::to_string(num_layers));
    }
    if (hidden_dim <= 0) {
        throw InvalidArgument("hidden_dim must be positive");
    }
    if (num_heads <= 0 || hidden_dim % num_heads != 0) {
        throw InvalidArgument("num_heads (" + std::to_string(num_heads) + ") must divide hidden_dim (" +
                              std::to_string(hidden_dim) + ")");
    }
    if (vocab_size < kOptionCount) {
        throw InvalidArgument("vocab_size must be at least the " + std::to_string(kOptionCount) +
                              " reserved option tokens");
    }
    if (max_seq_len <= 0) {
        throw InvalidArgument("max_seq_len must be positive");
    }
}

void validate_forward_request(const ModelConfig & config, const TokenSequence & seq,
                              const std::optional<InterventionSpec> & intervention,
                              std::span<const int> capture_layers) {
    if (seq.tokens.empty()) {
        throw InvalidArgument("forward: empty token sequence");
    }
    if (seq.tokens.size() > static_cast<std::size_t>(config.max_seq_len)) {
        throw InvalidArgument("forward: sequence length " + std::to_string(seq.tokens.size()) +
                              " exceeds max_seq_len " + std::to_string(config.max_seq_len));
    }
    for (const TokenId t : seq.tokens) {
        if (t < 0 || t >= config.vocab_size) {
            throw InvalidArgument("forward: token id " + std::to_string(t) + " outside vocabulary of size " +
                                  std::to_string(config.vocab_size));
        }
    }
    if (seq.answer_position && *seq.answer_position >= seq.tokens.size()) {
        throw InvalidArgument("forward: answer_position " + std::to_string(*seq.answer_position) +
                              " outside sequence of length " + std::to_string(seq.tokens.size()));
    }
    for (const int layer : capture_layers) {
        if (layer < 1 || layer > config.num_layers) {
            throw InvalidArgument("forward: capture layer " + std::to_string(layer) + " outside [1, " +
                                  std::to_string(config.num_layers) + "]");
        }
    }
    if (intervention) {
        if (intervention->layer < 1 || intervention->layer > config.num_layers) {
            throw InvalidArgument("forward: intervention layer " + std::to_string(intervention->layer) +
                                  " outside [1, " + std::to_string(config.num_layers) + "]");
        }
        if (intervention->vector.size() != static_cast<std::size_t>(config.hidden_dim)) {
            throw InvalidArgument("forward: intervention vector has dimension " +
                                  std::to_string(intervention->vector.size()) + ", model hidden_dim is " +
                                  std::to_string(config.hidden_dim));
        }
    }
}

Vector steer_hidden(std::span<const double> h, std::span<const double> v, double strength) {
    if (h.size() != v.size()) {
        throw InvalidArgument("steer_hidden: dimension mismatch (" + std::to_string(h.size()) + " vs " +
                              std::to_string(v.size()) + ")");
    }
    Vector out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        out[i] = h[i] + strength * v[i];
    }
    return out;
}

ForwardResult forward_with_activations(const LanguageModel & model, const TokenSequence & seq,
                                       const std::optional<InterventionSpec> & intervention,
                                       std::span<const int> capture_layers) {
    validate_forward_request(model.config(), seq, intervention, capture_layers);
    return model.forward(seq, intervention, capture_layers);
}

Vector restricted_softmax(std::span<const double> logits, std::span<const TokenId> options) {
    if (options.empty()) {
        throw InvalidArgument("option_distribution: options must be nonempty");
    }
    std::set<TokenId> seen;
    for (const TokenId t : options) {
        if (t < 0 || static_cast<std::size_t>(t) >= logits.size()) {
            throw InvalidArgument("option_distribution: option token " + std::to_string(t) + " outside vocabulary");
        }
        if (!seen.insert(t).second) {
            throw InvalidArgument("option_distribution: duplicate option token " + std::to_string(t));
        }
    }
    double top = logits[static_cast<std::size_t>(options[0])];
    for (const TokenId t : options) {
        top = std::max(top, logits[static_cast<std::size_t>(t)]);
    }
    Vector probs(options.size());
    double total = 0.0;
    for (std::size_t i = 0; i < options.size(); ++i) {
        probs[i] = std::exp(logits[static_cast<std::size_t>(options[i])] - top);
        total += probs[i];
    }
    for (double & p : probs) {
        p /= total;
    }
    return probs;
}

Vector option_distribution(const LanguageModel & model, const TokenSequence & prompt,
                           std::span<const TokenId> options, const std::optional<InterventionSpec> & intervention) {
    const auto result = forward_with_activations(model, prompt, intervention, {});
    return restricted_softmax(result.logits, options);
}

std::size_t argmax_lowest(std::span<const double> values) {
    if (values.empty()) {
        throw InvalidArgument("argmax over an empty range");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

ModelWeights random_weights(const ModelConfig & config) {
    config.validate();
    const auto d = static_cast<std::size_t>(config.hidden_dim);
    const auto v = static_cast<std::size_t>(config.vocab_size);
    const auto ff = static_cast<std::size_t>(config.ff_dim());
    Rng rng(derive_seed(config.seed, "toy-model-weights"));

    ModelWeights w;
    w.token_embedding = Matrix(v, d);
    fill_normal(rng, w.token_embedding, 1.0);
    w.position_embedding = Matrix(static_cast<std::size_t>(config.max_seq_len), d);
    fill_normal(rng, w.position_embedding, kBlockInitStd);
    for (int l = 0; l < config.num_layers; ++l) {
        BlockWeights b;
        b.attn_norm_gain.assign(d, 1.0);
        for (Matrix * m : {&b.wq, &b.wk, &b.wv, &b.wo}) {
            *m = Matrix(d, d);
            fill_normal(rng, *m, kBlockInitStd);
        }
        b.mlp_norm_gain.assign(d, 1.0);
        b.w_in = Matrix(ff, d);
        fill_normal(rng, b.w_in, kBlockInitStd);
        b.b_in.assign(ff, 0.0);
        b.w_out = Matrix(d, ff);
        fill_normal(rng, b.w_out, kBlockInitStd);
        b.b_out.assign(d, 0.0);
        w.blocks.push_back(std::move(b));
    }
    w.final_norm_gain.assign(d, 1.0);
    w.unembedding = Matrix(v, d);
    fill_normal(rng, w.unembedding, 1.0 / std::sqrt(static_cast<double>(d)));
    w.output_bias.assign(v, 0.0);
    return w;
}

void validate_weights(const ModelConfig & config, const ModelWeights & w) {
    config.validate();
    const auto d = static_cast<std::size_t>(config.hidden_dim);
    const auto v = static_cast<std::size_t>(config.vocab_size);
    const auto ff = static_cast<std::size_t>(config.ff_dim());
    expect_shape(w.token_embedding, v, d, "token_embedding");
    expect_shape(w.position_embedding, static_cast<std::size_t>(config.max_seq_len), d, "position_embedding");
    if (w.blocks.size() != static_cast<std::size_t>(config.num_layers)) {
        throw InvalidArgument("weights: expected " + std::to_string(config.num_layers) + " blocks, got " +
                              std::to_string(w.blocks.size()));
    }
    for (std::size_t l = 0; l < w.blocks.size(); ++l) {
        const auto & b = w.blocks[l];
        const std::string p = "blocks[" + std::to_string(l) + "].";
        expect_size(b.attn_norm_gain, d, p + "attn_norm_gain");
        expect_shape(b.wq, d, d, p + "wq");
        expect_shape(b.wk, d, d, p + "wk");
        expect_shape(b.wv, d, d, p + "wv");
        expect_shape(b.wo, d, d, p + "wo");
        expect_size(b.mlp_norm_gain, d, p + "mlp_norm_gain");
        expect_shape(b.w_in, ff, d, p + "w_in");
        expect_size(b.b_in, ff, p + "b_in");
        expect_shape(b.w_out, d, ff, p + "w_out");
        expect_size(b.b_out, d, p + "b_out");
    }
    expect_size(w.final_norm_gain, d, "final_norm_gain");
    expect_shape(w.unembedding, v, d, "unembedding");
    expect_size(w.output_bias, v, "output_bias");
}

ToyModel::ToyModel(ModelConfig config, Vocabulary vocabulary)
    : ToyModel(config, std::move(vocabulary), random_weights(config)) {}

ToyModel::ToyModel(ModelConfig config, Vocabulary vocabulary, ModelWeights weights)
    : config_(config), vocabulary_(std::move(vocabulary)), weights_(std::move(weights)) {
    validate_weights(config_, weights_);
    if (vocabulary_.size() != static_cast<std::size_t>(config_.vocab_size)) {
        throw InvalidArgument("vocabulary has " + std::to_string(vocabulary_.size()) +
                              " tokens but vocab_size is " + std::to_string(config_.vocab_size));
    }
}

ForwardResult ToyModel::forward(const TokenSequence & seq, const std::optional<InterventionSpec> & intervention,
                                std::span<const int> capture_layers) const {
    validate_forward_request(config_, seq, intervention, capture_layers);

    const std::size_t n = seq.tokens.size();
    const auto d = static_cast<std::size_t>(config_.hidden_dim);
    const auto heads = static_cast<std::size_t>(config_.num_heads);
    const auto dh = static_cast<std::size_t>(config_.head_dim());
    const auto ff = static_cast<std::size_t>(config_.ff_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto emb = weights_.token_embedding.row(static_cast<std::size_t>(seq.tokens[i]));
        const auto pos = weights_.position_embedding.row(i);
        auto xi = x.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            xi[c] = emb[c] + pos[c];
        }
    }

    ForwardResult result;
    Matrix normed(n, d);
    Matrix q(n, d), k(n, d), v(n, d), attn(n, d);
    Vector scores(n), projected(d), hidden(ff);

    for (int layer = 1; layer <= config_.num_layers; ++layer) {
        const auto & b = weights_.blocks[static_cast<std::size_t>(layer - 1)];

        for (std::size_t i = 0; i < n; ++i) {
            rms_norm(x.row(i), b.attn_norm_gain, normed.row(i));
            matvec(b.wq, normed.row(i), q.row(i));
            matvec(b.wk, normed.row(i), k.row(i));
            matvec(b.wv, normed.row(i), v.row(i));
        }
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < n; ++i) {
                const auto qi = q.row(i).subspan(off, dh);
                double top = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j <= i; ++j) {
                    scores[j] = dot(qi, k.row(j).subspan(off, dh)) * scale;
                    top = std::max(top, scores[j]);
                }
                double total = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    scores[j] = std::exp(scores[j] - top);
                    total += scores[j];
                }
                auto out = attn.row(i).subspan(off, dh);
                std::fill(out.begin(), out.end(), 0.0);
                for (std::size_t j = 0; j <= i; ++j) {
                    const double p = scores[j] / total;
                    const auto vj = v.row(j).subspan(off, dh);
                    for (std::size_t c = 0; c < dh; ++c) {
                        out[c] += p * vj[c];
                    }
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            matvec(b.wo, attn.row(i), projected);
            auto xi = x.row(i);
            for (std::size_t c = 0; c < d; ++c) {
                xi[c] += projected[c];
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            auto xi = x.row(i);
            rms_norm(xi, b.mlp_norm_gain, normed.row(i));
            matvec(b.w_in, normed.row(i), hidden);
            for (std::size_t u = 0; u < ff; ++u) {
                hidden[u] = gelu(hidden[u] + b.b_in[u]);
            }
            matvec(b.w_out, hidden, projected);
            for (std::size_t c = 0; c < d; ++c) {
                xi[c] += projected[c] + b.b_out[c];
            }
        }

        // Forward hook: block output of `layer`, before the next block reads it.
        if (intervention && intervention->layer == layer) {
            const std::size_t first = intervention->position_policy == PositionPolicy::all_positions ? 0 : n - 1;
            for (std::size_t i = first; i < n; ++i) {
                auto xi = x.row(i);
                for (std::size_t c = 0; c < d; ++c) {
                    xi[c] += intervention->strength * intervention->vector[c];
                }
            }
        }

        if (std::find(capture_layers.begin(), capture_layers.end(), layer) != capture_layers.end()) {
            result.captured.push_back({layer, x});
        }
    }

    Vector final_state(d);
    rms_norm(x.row(n - 1), weights_.final_norm_gain, final_state);
    result.logits.resize(static_cast<std::size_t>(config_.vocab_size));
    matvec(weights_.unembedding, final_state, result.logits);
    for (std::size_t t = 0; t < result.logits.size(); ++t) {
        result.logits[t] += weights_.output_bias[t];
    }
    return result;
}

} // namespace steercal
