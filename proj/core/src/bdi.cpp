#include "steercal/bdi.hpp"

#include "steercal/error.hpp"
#include "steercal/model.hpp"

#include <algorithm>
#include <cctype>

namespace steercal {

namespace {

std::vector<BdiItem> make_catalogue() {
    struct Entry {
        const char * name;
        const char * keyword;
    };
    static constexpr Entry entries[kItemCount] = {
        {"Sadness", "sadness"},
        {"Pessimism", "pessimism"},
        {"Past Failure", "failure"},
        {"Loss of Pleasure", "pleasure"},
        {"Guilty Feelings", "guilt"},
        {"Punishment Feelings", "punishment"},
        {"Self-Dislike", "dislike"},
        {"Self-Criticalness", "criticism"},
        {"Suicidal Thoughts or Wishes", "suicidal"},
        {"Crying", "crying"},
        {"Agitation", "agitation"},
        {"Loss of Interest", "interest"},
        {"Indecisiveness", "indecisiveness"},
        {"Worthlessness", "worthlessness"},
        {"Loss of Energy", "energy"},
        {"Changes in Sleeping Pattern", "sleep"},
        {"Irritability", "irritability"},
        {"Changes in Appetite", "appetite"},
        {"Concentration Difficulty", "concentration"},
        {"Tiredness or Fatigue", "fatigue"},
        {"Loss of Interest in Sex", "libido"},
    };

    std::vector<BdiItem> items;
    items.reserve(kItemCount);
    for (int i = 0; i < kItemCount; ++i) {
        BdiItem item;
        item.item_id = i + 1;
        item.name = entries[i].name;
        item.keyword = entries[i].keyword;
        std::string lower = item.name;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        item.option_texts = {"no " + lower, "mild " + lower, "moderate " + lower, "severe " + lower};
        items.push_back(std::move(item));
    }
    return items;
}

} // namespace

const std::vector<BdiItem> & bdi_catalogue() {
    static const std::vector<BdiItem> catalogue = make_catalogue();
    return catalogue;
}

bool is_valid_item_id(int item_id) {
    return item_id >= 1 && item_id <= kItemCount;
}

const BdiItem & bdi_item(int item_id) {
    if (!is_valid_item_id(item_id)) {
        throw InvalidArgument("unknown BDI-II item id " + std::to_string(item_id));
    }
    return bdi_catalogue()[static_cast<std::size_t>(item_id - 1)];
}

std::vector<BdiItem> bind_option_tokens(const std::vector<BdiItem> & items, const LanguageModel & model) {
    std::vector<BdiItem> bound = items;
    for (auto & item : bound) {
        for (int k = 0; k < 4; ++k) {
            item.option_tokens[static_cast<std::size_t>(k)] = model.option_token(k);
        }
    }
    return bound;
}

} // namespace steercal
