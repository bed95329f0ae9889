#include "steercal/templates.hpp"

#include "steercal/error.hpp"

namespace steercal {

namespace {

void replace_all(std::string & text, const std::string & slot, const std::string & value) {
    std::size_t pos = 0;
    while ((pos = text.find(slot, pos)) != std::string::npos) {
        text.replace(pos, slot.size(), value);
        pos += value.size();
    }
}

void require_slot(const std::string & text, const std::string & slot, const char * which) {
    if (text.find(slot) == std::string::npos) {
        throw ConfigError(std::string(which) + " template is missing the " + slot + " slot");
    }
}

} // namespace

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.relevance =
        "Question: Is this Reddit post relevant to answer the specific BDI-II item? Answer 1 if the post is "
        "topically-relevant to describe the writer's state, feelings, or experience and answer the BDI-II item "
        "{item_name}, and 0 otherwise (i.e., it is not helpful to answer the item). Do not give any explanation, "
        "return only 0 or 1.\nReddit Post: {post} Answer:";
    t.questionnaire =
        "Question: Read the Reddit posts written by a user and answer the BDI-II item {item_name}. "
        "Options: {options}. Choose the option that best describes the writer's state, feelings, or experience. "
        "Do not give any explanation, return only 0, 1, 2 or 3.\nReddit Posts:\n{posts}\nAnswer:";
    return t;
}

void PromptTemplates::validate() const {
    require_slot(relevance, "{item_name}", "relevance");
    require_slot(relevance, "{post}", "relevance");
    require_slot(questionnaire, "{item_name}", "questionnaire");
    require_slot(questionnaire, "{posts}", "questionnaire");
}

std::string render_relevance_prompt(const PromptTemplates & templates, const BdiItem & item,
                                    const std::string & post) {
    std::string text = templates.relevance;
    replace_all(text, "{item_name}", item.name);
    replace_all(text, "{post}", post);
    return text;
}

std::string render_questionnaire_prompt(const PromptTemplates & templates, const BdiItem & item,
                                        std::span<const std::string> posts) {
    std::string options;
    for (int k = 0; k < 4; ++k) {
        if (k > 0) {
            options += ", ";
        }
        options += std::to_string(k) + " = " + item.option_texts[static_cast<std::size_t>(k)];
    }
    std::string joined;
    for (std::size_t i = 0; i < posts.size(); ++i) {
        if (i > 0) {
            joined += '\n';
        }
        joined += posts[i];
    }
    std::string text = templates.questionnaire;
    replace_all(text, "{item_name}", item.name);
    replace_all(text, "{options}", options);
    replace_all(text, "{posts}", joined);
    return text;
}

} // namespace steercal
