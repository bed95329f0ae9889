#pragma once

#include "steercal/bdi.hpp"

#include <array>
#include <string>
#include <string_view>

namespace steercal {

enum class SeverityCategory { minimal, mild, moderate, severe };

// eRisk bounds on the BDI-II total: minimal 0-9, mild 10-18, moderate 19-29,
// severe 30-63. Throws InvalidArgument outside [0, 63].
SeverityCategory category_of(int total);

std::string_view to_string(SeverityCategory category);
SeverityCategory parse_category(std::string_view name);

// A completed questionnaire. total and category are always derived from the
// scores, so the sheet cannot hold an inconsistent summary.
class AnswerSheet {
public:
    using Scores = std::array<int, kItemCount>;

    AnswerSheet() = default;
    AnswerSheet(std::string user_id, const Scores & scores);

    const std::string & user_id() const noexcept { return user_id_; }
    const Scores & scores() const noexcept { return scores_; }
    int score(int item_id) const;
    int total() const noexcept { return total_; }
    SeverityCategory category() const noexcept { return category_; }

    friend bool operator==(const AnswerSheet &, const AnswerSheet &) = default;

private:
    std::string user_id_;
    Scores scores_{};
    int total_ = 0;
    SeverityCategory category_ = SeverityCategory::minimal;
};

} // namespace steercal
