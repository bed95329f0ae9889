#include "steercal/sheet.hpp"

#include "steercal/error.hpp"

#include <numeric>

namespace steercal {

SeverityCategory category_of(int total) {
    if (total < 0 || total > kMaxTotalScore) {
        throw InvalidArgument("BDI-II total " + std::to_string(total) + " outside [0, 63]");
    }
    if (total <= 9) {
        return SeverityCategory::minimal;
    }
    if (total <= 18) {
        return SeverityCategory::mild;
    }
    if (total <= 29) {
        return SeverityCategory::moderate;
    }
    return SeverityCategory::severe;
}

std::string_view to_string(SeverityCategory category) {
    switch (category) {
        case SeverityCategory::minimal: return "minimal";
        case SeverityCategory::mild: return "mild";
        case SeverityCategory::moderate: return "moderate";
        case SeverityCategory::severe: return "severe";
    }
    return "unknown";
}

SeverityCategory parse_category(std::string_view name) {
    for (const auto c : {SeverityCategory::minimal, SeverityCategory::mild, SeverityCategory::moderate,
                         SeverityCategory::severe}) {
        if (to_string(c) == name) {
            return c;
        }
    }
    throw InvalidArgument("unknown severity category \"" + std::string(name) + "\"");
}

AnswerSheet::AnswerSheet(std::string user_id, const Scores & scores)
    : user_id_(std::move(user_id)), scores_(scores) {
    for (std::size_t i = 0; i < scores_.size(); ++i) {
        if (scores_[i] < 0 || scores_[i] > kMaxItemScore) {
            throw InvalidArgument("user " + user_id_ + ": item " + std::to_string(i + 1) + " score " +
                                  std::to_string(scores_[i]) + " outside [0, 3]");
        }
    }
    total_ = std::accumulate(scores_.begin(), scores_.end(), 0);
    category_ = category_of(total_);
}

int AnswerSheet::score(int item_id) const {
    if (!is_valid_item_id(item_id)) {
        throw InvalidArgument("unknown BDI-II item id " + std::to_string(item_id));
    }
    return scores_[static_cast<std::size_t>(item_id - 1)];
}

} // namespace steercal
