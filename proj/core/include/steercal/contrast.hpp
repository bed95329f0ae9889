#pragma once

#include "steercal/datasets.hpp"
#include "steercal/model.hpp"
#include "steercal/templates.hpp"

#include <span>
#include <string>
#include <vector>

namespace steercal {

enum class Polarity { positive, negative };

std::string_view to_string(Polarity polarity);

// A relevance prompt with an appended answer token. The prompt is positive when
// the answer agrees with the gold label.
struct LabeledPrompt {
    int item_id = 0;
    std::string post_id;
    std::string text;             // rendered prompt followed by the answer digit
    TokenSequence prompt_tokens;  // answer_position indexes the appended answer token
    int gold_label = 0;
    int answer_label = 0;
    TokenId answer_token = 0;
    Polarity polarity = Polarity::negative;
};

// Answer-token hidden states of a set of prompts at one layer.
struct RepresentationSet {
    int item_id = 0;
    int layer = 0;
    Matrix vectors;                 // one row per prompt
    std::vector<Polarity> polarities;
    std::vector<int> gold_labels;

    std::size_t size() const noexcept { return polarities.size(); }
    std::size_t count(Polarity polarity) const;

    // Rows with the given polarity, in their original order.
    RepresentationSet select(Polarity polarity) const;

    // Throws InvalidArgument when row and label counts disagree.
    void validate() const;
};

// Two prompts per record (answers 1 and 0), in record order, positive first
// when the gold label is 1. Throws InvalidArgument for an unknown item or a
// record that belongs to another item.
std::vector<LabeledPrompt> build_contrast_pairs(const LanguageModel & model, std::span<const RelevanceRecord> records,
                                                int item_id, const PromptTemplates & templates = PromptTemplates::defaults());

// Runs every prompt without intervention and keeps the hidden state at its
// answer position after block `layer`.
RepresentationSet extract_representations(const LanguageModel & model, std::span<const LabeledPrompt> pairs, int layer,
                                          std::size_t workers = 0);

// Prompts with the appended answer removed, ready for steered decoding.
std::vector<TokenSequence> strip_answers(std::span<const LabeledPrompt> prompts);

} // namespace steercal
