#include "steercal/contrast.hpp"

#include "steercal/error.hpp"
#include "steercal/parallel.hpp"

namespace steercal {

std::string_view to_string(Polarity polarity) {
    return polarity == Polarity::positive ? "positive" : "negative";
}

std::size_t RepresentationSet::count(Polarity polarity) const {
    std::size_t n = 0;
    for (const auto p : polarities) {
        n += p == polarity ? 1 : 0;
    }
    return n;
}

RepresentationSet RepresentationSet::select(Polarity polarity) const {
    validate();
    RepresentationSet out;
    out.item_id = item_id;
    out.layer = layer;
    out.vectors = Matrix(0, vectors.cols());
    for (std::size_t i = 0; i < size(); ++i) {
        if (polarities[i] == polarity) {
            out.vectors.append_row(vectors.row(i));
            out.polarities.push_back(polarity);
            out.gold_labels.push_back(gold_labels.empty() ? 0 : gold_labels[i]);
        }
    }
    return out;
}

void RepresentationSet::validate() const {
    if (vectors.rows() != polarities.size()) {
        throw InvalidArgument("representation set has " + std::to_string(vectors.rows()) + " rows but " +
                              std::to_string(polarities.size()) + " polarities");
    }
    if (!gold_labels.empty() && gold_labels.size() != polarities.size()) {
        throw InvalidArgument("representation set has " + std::to_string(polarities.size()) + " rows but " +
                              std::to_string(gold_labels.size()) + " gold labels");
    }
}

std::vector<LabeledPrompt> build_contrast_pairs(const LanguageModel & model, std::span<const RelevanceRecord> records,
                                                int item_id, const PromptTemplates & templates) {
    if (!is_valid_item_id(item_id)) {
        throw InvalidArgument("build_contrast_pairs: unknown item id " + std::to_string(item_id));
    }
    const BdiItem & item = bdi_item(item_id);
    std::vector<LabeledPrompt> prompts;
    prompts.reserve(records.size() * 2);
    for (const auto & record : records) {
        if (record.item_id != item_id) {
            throw InvalidArgument("build_contrast_pairs: record " + record.post_id + " belongs to item " +
                                  std::to_string(record.item_id) + ", not " + std::to_string(item_id));
        }
        const std::string body = render_relevance_prompt(templates, item, record.text);
        const std::vector<TokenId> body_tokens = model.tokenize(body);
        for (const int answer : {1, 0}) {
            LabeledPrompt p;
            p.item_id = item_id;
            p.post_id = record.post_id;
            p.text = body + " " + std::to_string(answer);
            p.gold_label = record.label;
            p.answer_label = answer;
            p.answer_token = model.option_token(answer);
            p.polarity = answer == record.label ? Polarity::positive : Polarity::negative;
            p.prompt_tokens.tokens = body_tokens;
            p.prompt_tokens.tokens.push_back(p.answer_token);
            p.prompt_tokens.answer_position = p.prompt_tokens.tokens.size() - 1;
            prompts.push_back(std::move(p));
        }
    }
    return prompts;
}

RepresentationSet extract_representations(const LanguageModel & model, std::span<const LabeledPrompt> pairs, int layer,
                                          std::size_t workers) {
    const ModelConfig & config = model.config();
    if (layer < 1 || layer > config.num_layers) {
        throw InvalidArgument("extract_representations: layer " + std::to_string(layer) + " outside [1, " +
                              std::to_string(config.num_layers) + "]");
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i].prompt_tokens.answer_position) {
            throw InvalidArgument("extract_representations: prompt " + std::to_string(i) + " (" + pairs[i].post_id +
                                  ") has no answer position");
        }
    }

    RepresentationSet reps;
    reps.item_id = pairs.empty() ? 0 : pairs.front().item_id;
    reps.layer = layer;
    reps.vectors = Matrix(pairs.size(), static_cast<std::size_t>(config.hidden_dim));
    const int capture[] = {layer};
    parallel_for(
        pairs.size(),
        [&](std::size_t i) {
            const auto result = forward_with_activations(model, pairs[i].prompt_tokens, std::nullopt, capture);
            const auto row = result.captured.front().states.row(*pairs[i].prompt_tokens.answer_position);
            auto out = reps.vectors.row(i);
            std::copy(row.begin(), row.end(), out.begin());
        },
        workers);
    for (const auto & p : pairs) {
        reps.polarities.push_back(p.polarity);
        reps.gold_labels.push_back(p.gold_label);
    }
    return reps;
}

std::vector<TokenSequence> strip_answers(std::span<const LabeledPrompt> prompts) {
    std::vector<TokenSequence> out;
    out.reserve(prompts.size());
    for (const auto & p : prompts) {
        TokenSequence seq;
        const std::size_t end = p.prompt_tokens.answer_position.value_or(p.prompt_tokens.tokens.size());
        seq.tokens.assign(p.prompt_tokens.tokens.begin(), p.prompt_tokens.tokens.begin() + static_cast<std::ptrdiff_t>(end));
        out.push_back(std::move(seq));
    }
    return out;
}

} // namespace steercal
