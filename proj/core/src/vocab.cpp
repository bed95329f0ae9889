#include "steercal/vocab.hpp"

#include "steercal/error.hpp"
#include "steercal/rng.hpp"

#include <cctype>

namespace steercal {

namespace {

bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0 || c == '\'' || c >= 0x80;
}

} // namespace

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> pieces;
    std::string current;
    for (const char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (is_word_char(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
            continue;
        }
        if (!current.empty()) {
            pieces.push_back(std::move(current));
            current.clear();
        }
        if (std::isspace(c) == 0) {
            pieces.emplace_back(1, raw);
        }
    }
    if (!current.empty()) {
        pieces.push_back(std::move(current));
    }
    return pieces;
}

Vocabulary::Vocabulary(std::vector<std::string> words, std::size_t unknown_buckets)
    : words_(std::move(words)), unknown_buckets_(unknown_buckets) {
    if (words_.size() < kOptionCount) {
        throw InvalidArgument("vocabulary must contain the option pieces 0..3");
    }
    for (int k = 0; k < kOptionCount; ++k) {
        if (words_[static_cast<std::size_t>(k)] != std::to_string(k)) {
            throw InvalidArgument("vocabulary id " + std::to_string(k) + " must be the option piece \"" +
                                  std::to_string(k) + "\"");
        }
    }
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
            throw InvalidArgument("duplicate vocabulary piece \"" + words_[i] + "\"");
        }
    }
}

Vocabulary Vocabulary::minimal(std::size_t size) {
    if (size < kOptionCount) {
        throw InvalidArgument("vocabulary size must be at least " + std::to_string(kOptionCount));
    }
    std::vector<std::string> words;
    for (int k = 0; k < kOptionCount; ++k) {
        words.push_back(std::to_string(k));
    }
    return Vocabulary(std::move(words), size - kOptionCount);
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const auto & piece : split_words(text)) {
        if (auto it = index_.find(piece); it != index_.end()) {
            ids.push_back(it->second);
        } else if (unknown_buckets_ > 0) {
            const auto bucket = fnv1a64(piece) % unknown_buckets_;
            ids.push_back(static_cast<TokenId>(words_.size() + bucket));
        } else {
            throw DataError("piece \"" + piece + "\" is not in the vocabulary");
        }
    }
    return ids;
}

TokenId Vocabulary::id_of(std::string_view piece) const {
    if (auto it = index_.find(std::string(piece)); it != index_.end()) {
        return it->second;
    }
    throw InvalidArgument("piece \"" + std::string(piece) + "\" is not in the vocabulary");
}

bool Vocabulary::contains(std::string_view piece) const {
    return index_.contains(std::string(piece));
}

std::string Vocabulary::piece(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
        throw InvalidArgument("token id " + std::to_string(id) + " out of range");
    }
    if (static_cast<std::size_t>(id) < words_.size()) {
        return words_[static_cast<std::size_t>(id)];
    }
    return "<unk:" + std::to_string(static_cast<std::size_t>(id) - words_.size()) + ">";
}

TokenId Vocabulary::option_token(int score) const {
    if (score < 0 || score >= kOptionCount) {
        throw InvalidArgument("option score " + std::to_string(score) + " outside 0..3");
    }
    return static_cast<TokenId>(score);
}

} // namespace steercal
