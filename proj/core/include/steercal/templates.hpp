#pragma once

#include "steercal/bdi.hpp"

#include <span>
#include <string>

namespace steercal {

// Prompt templates. Slots: {item_name} and {post} for relevance;
// {item_name}, {options} and {posts} for questionnaire completion.
struct PromptTemplates {
    std::string relevance;
    std::string questionnaire;

    static PromptTemplates defaults();

    // Throws ConfigError when a required slot is missing.
    void validate() const;
};

std::string render_relevance_prompt(const PromptTemplates & templates, const BdiItem & item, const std::string & post);

// Evidence posts are joined one per line, in the order given.
std::string render_questionnaire_prompt(const PromptTemplates & templates, const BdiItem & item,
                                        std::span<const std::string> posts);

} // namespace steercal
