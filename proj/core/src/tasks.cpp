#include "steercal/tasks.hpp"

#include "steercal/error.hpp"
#include "steercal/parallel.hpp"

namespace steercal {

namespace {

void require_fits(const LanguageModel & model, const TokenSequence & seq, const char * what, const char * advice) {
    const auto limit = static_cast<std::size_t>(model.config().max_seq_len);
    if (seq.tokens.size() > limit) {
        throw DataError(std::string(what) + " has " + std::to_string(seq.tokens.size()) +
                        " tokens, exceeding max_seq_len " + std::to_string(limit) + advice);
    }
}

} // namespace

OptionDecision decide(const LanguageModel & model, const TokenSequence & prompt, std::span<const TokenId> options,
                      const std::optional<AppliedSteering> & steering) {
    std::optional<InterventionSpec> spec;
    if (steering) {
        spec = steering->intervention();
    }
    const auto result = forward_with_activations(model, prompt, spec, {});
    OptionDecision d;
    d.probabilities = restricted_softmax(result.logits, options);
    for (const TokenId t : options) {
        d.option_logits.push_back(result.logits[static_cast<std::size_t>(t)]);
    }
    d.label = static_cast<int>(argmax_lowest(d.option_logits));
    return d;
}

TokenSequence relevance_prompt(const LanguageModel & model, const std::string & post, const BdiItem & item,
                               const PromptTemplates & templates) {
    if (post.empty()) {
        throw InvalidArgument("predict_relevance: empty post");
    }
    TokenSequence seq;
    seq.tokens = model.tokenize(render_relevance_prompt(templates, item, post));
    require_fits(model, seq, "relevance prompt", "; the post is too long for this model");
    return seq;
}

OptionDecision relevance_decision(const LanguageModel & model, const std::string & post, const BdiItem & item,
                                  const std::optional<AppliedSteering> & steering, const PromptTemplates & templates) {
    const TokenId options[] = {model.option_token(0), model.option_token(1)};
    return decide(model, relevance_prompt(model, post, item, templates), options, steering);
}

int predict_relevance(const LanguageModel & model, const std::string & post, const BdiItem & item,
                      const std::optional<AppliedSteering> & steering, const PromptTemplates & templates) {
    return relevance_decision(model, post, item, steering, templates).label;
}

TokenSequence questionnaire_prompt(const LanguageModel & model, std::span<const std::string> evidence,
                                   const BdiItem & item, const PromptTemplates & templates) {
    TokenSequence seq;
    seq.tokens = model.tokenize(render_questionnaire_prompt(templates, item, evidence));
    require_fits(model, seq, "questionnaire prompt", "; reduce k (retrieval.k_max) or shorten the evidence posts");
    return seq;
}

int score_item(const LanguageModel & model, std::span<const std::string> evidence, const BdiItem & item,
               const std::optional<AppliedSteering> & steering, const PromptTemplates & templates) {
    std::array<TokenId, 4> options{};
    for (int k = 0; k < 4; ++k) {
        options[static_cast<std::size_t>(k)] = model.option_token(k);
    }
    return decide(model, questionnaire_prompt(model, evidence, item, templates), options, steering).label;
}

ItemScorer model_scorer(const LanguageModel & model, SteeringSet steering, PromptTemplates templates) {
    return [&model, steering = std::move(steering), templates = std::move(templates)](
               const UserHistory &, const BdiItem & item, std::span<const std::string> evidence) {
        std::optional<AppliedSteering> applied;
        if (auto it = steering.find(item.item_id); it != steering.end()) {
            applied = it->second;
        }
        return score_item(model, evidence, item, applied, templates);
    };
}

ItemScorer oracle_scorer() {
    return [](const UserHistory & user, const BdiItem & item, std::span<const std::string>) {
        if (!user.true_sheet) {
            throw DataError("oracle scorer: user " + user.user_id + " has no true sheet");
        }
        return user.true_sheet->score(item.item_id);
    };
}

AnswerSheet complete_questionnaire(const UserHistory & user, std::span<const BdiItem> items, const ItemScorer & scorer,
                                   const EmbeddingProvider & provider, const RetrievalConfig & retrieval,
                                   QuestionnaireTrace * trace, std::size_t workers) {
    if (items.size() != static_cast<std::size_t>(kItemCount)) {
        throw InvalidArgument("complete_questionnaire: expected 21 items, got " + std::to_string(items.size()));
    }
    const EmbeddedUser embedded(user, provider, workers);
    AnswerSheet::Scores scores{};
    std::vector<RetrievalResult> retrievals(items.size());
    parallel_for(
        items.size(),
        [&](std::size_t j) {
            const BdiItem & item = items[j];
            try {
                retrievals[j] = retrieve(embedded, item, provider, retrieval);
                std::vector<std::string> evidence;
                for (const auto & post : retrievals[j].selected) {
                    evidence.push_back(user.posts[post.post_index]);
                }
                const int score = scorer(user, item, evidence);
                if (score < 0 || score > kMaxItemScore) {
                    throw InvalidArgument("scorer returned " + std::to_string(score));
                }
                scores[static_cast<std::size_t>(item.item_id - 1)] = score;
            } catch (const ConfigError &) {
                throw;
            } catch (const DataError & e) {
                throw DataError("user " + user.user_id + ", item " + std::to_string(item.item_id) + ": " + e.what());
            } catch (const std::exception & e) {
                throw Error("user " + user.user_id + ", item " + std::to_string(item.item_id) + ": " + e.what());
            }
        },
        workers);
    if (trace != nullptr) {
        trace->retrievals = std::move(retrievals);
    }
    return AnswerSheet(user.user_id, scores);
}

} // namespace steercal
