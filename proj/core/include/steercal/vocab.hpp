#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace steercal {

using TokenId = std::int32_t;

// Number of Likert option tokens ("0".."3") every vocabulary reserves. The
// relevance task uses the first two.
inline constexpr int kOptionCount = 4;

// Splits text into lowercase word pieces: runs of [a-z0-9'] form one piece,
// every other non-space character is a piece of its own.
std::vector<std::string> split_words(std::string_view text);

// Fixed toy vocabulary. Known pieces map to their id; unknown pieces are hashed
// into a block of bucket tokens so that any text can be encoded.
class Vocabulary {
public:
    // `words` must start with the option pieces "0".."3" (ids 0..3).
    Vocabulary(std::vector<std::string> words, std::size_t unknown_buckets);

    // Option pieces plus enough unknown buckets to reach `size` tokens.
    static Vocabulary minimal(std::size_t size);

    std::size_t size() const noexcept { return words_.size() + unknown_buckets_; }
    std::size_t known_size() const noexcept { return words_.size(); }
    std::size_t unknown_buckets() const noexcept { return unknown_buckets_; }

    std::vector<TokenId> encode(std::string_view text) const;
    TokenId id_of(std::string_view piece) const;
    bool contains(std::string_view piece) const;
    std::string piece(TokenId id) const;

    TokenId option_token(int score) const;

    const std::vector<std::string> & words() const noexcept { return words_; }

private:
    std::vector<std::string> words_;
    std::size_t unknown_buckets_ = 0;
    std::unordered_map<std::string, TokenId> index_;
};

} // namespace steercal
