#pragma once

#include "steercal/bdi.hpp"
#include "steercal/datasets.hpp"
#include "steercal/model.hpp"
#include "steercal/retrieval.hpp"
#include "steercal/sheet.hpp"
#include "steercal/steering.hpp"
#include "steercal/templates.hpp"

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace steercal {

// A steering vector applied at a fixed strength to the final prompt token.
struct AppliedSteering {
    int layer = 0;
    Vector vector;
    double strength = 0.0;

    static AppliedSteering from(const SteeringVector & v, double strength) { return {v.layer, v.vector, strength}; }
    InterventionSpec intervention() const { return {layer, vector, strength, PositionPolicy::final_token_only}; }
};

// Constrained next-token decision among option tokens.
struct OptionDecision {
    int label = 0;               // index into the options, ties to the lowest
    Vector option_logits;        // raw next-token logits of the options
    Vector probabilities;        // softmax restricted to the options
};

OptionDecision decide(const LanguageModel & model, const TokenSequence & prompt, std::span<const TokenId> options,
                      const std::optional<AppliedSteering> & steering);

// Tokenized relevance prompt; throws InvalidArgument for an empty post and
// DataError when the prompt does not fit in max_seq_len.
TokenSequence relevance_prompt(const LanguageModel & model, const std::string & post, const BdiItem & item,
                               const PromptTemplates & templates = PromptTemplates::defaults());

OptionDecision relevance_decision(const LanguageModel & model, const std::string & post, const BdiItem & item,
                                  const std::optional<AppliedSteering> & steering,
                                  const PromptTemplates & templates = PromptTemplates::defaults());

// 1 when the post is predicted relevant to the item, else 0.
int predict_relevance(const LanguageModel & model, const std::string & post, const BdiItem & item,
                      const std::optional<AppliedSteering> & steering = std::nullopt,
                      const PromptTemplates & templates = PromptTemplates::defaults());

// Tokenized questionnaire prompt; DataError when it overflows max_seq_len.
TokenSequence questionnaire_prompt(const LanguageModel & model, std::span<const std::string> evidence,
                                   const BdiItem & item, const PromptTemplates & templates = PromptTemplates::defaults());

// Likert score 0..3 for one item from evidence posts (highest similarity first).
int score_item(const LanguageModel & model, std::span<const std::string> evidence, const BdiItem & item,
               const std::optional<AppliedSteering> & steering = std::nullopt,
               const PromptTemplates & templates = PromptTemplates::defaults());

// Scores one item for one user from the retrieved evidence.
using ItemScorer = std::function<int(const UserHistory & user, const BdiItem & item,
                                     std::span<const std::string> evidence)>;

// Steering per item id; an absent entry scores that item unsteered.
using SteeringSet = std::map<int, AppliedSteering>;

ItemScorer model_scorer(const LanguageModel & model, SteeringSet steering,
                        PromptTemplates templates = PromptTemplates::defaults());

// Reads the answer off the user's true sheet; used to validate the pipeline.
ItemScorer oracle_scorer();

struct QuestionnaireTrace {
    std::vector<RetrievalResult> retrievals;  // one per item, questionnaire order
};

// Retrieves evidence and scores all items of `items` (the 21 BDI-II items).
// Item failures are rethrown with the item id attached.
AnswerSheet complete_questionnaire(const UserHistory & user, std::span<const BdiItem> items, const ItemScorer & scorer,
                                   const EmbeddingProvider & provider, const RetrievalConfig & retrieval,
                                   QuestionnaireTrace * trace = nullptr, std::size_t workers = 0);

} // namespace steercal
