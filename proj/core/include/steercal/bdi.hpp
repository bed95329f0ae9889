#pragma once

#include "steercal/vocab.hpp"

#include <array>
#include <string>
#include <vector>

namespace steercal {

class LanguageModel;

inline constexpr int kItemCount = 21;
inline constexpr int kMaxItemScore = 3;
inline constexpr int kMaxTotalScore = kItemCount * kMaxItemScore;

struct BdiItem {
    int item_id = 0;                      // 1..21
    std::string name;                     // e.g. "Sadness"
    std::string keyword;                  // distinctive topic word; used as the retrieval query text
    std::array<std::string, 4> option_texts;
    std::array<TokenId, 4> option_tokens{0, 1, 2, 3};
};

// The 21 BDI-II items in questionnaire order, with toy option tokens 0..3.
const std::vector<BdiItem> & bdi_catalogue();

const BdiItem & bdi_item(int item_id);

bool is_valid_item_id(int item_id);

// Copies the catalogue with option tokens resolved through `model`.
std::vector<BdiItem> bind_option_tokens(const std::vector<BdiItem> & items, const LanguageModel & model);

} // namespace steercal
