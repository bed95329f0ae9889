#pragma once

#include "steercal/bdi.hpp"
#include "steercal/datasets.hpp"
#include "steercal/tensor.hpp"

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace steercal {

// Text embedder f(.). embed() must return a unit-norm vector of size dim() and
// be deterministic; implementations must tolerate concurrent calls.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual Vector embed(std::string_view text) const = 0;
};

// Seeded random projection of token counts: each distinct word piece owns a
// Gaussian column derived from (seed, piece), and a text embeds to the
// normalized count-weighted sum of its columns.
class ToyEmbedder final : public EmbeddingProvider {
public:
    explicit ToyEmbedder(std::size_t dim = 512, std::uint64_t seed = 0);

    std::size_t dim() const override { return dim_; }
    Vector embed(std::string_view text) const override;

private:
    Vector column(const std::string & piece) const;

    std::size_t dim_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, Vector> columns_;
};

// Cosine similarity. Throws InvalidArgument on a dimension mismatch or a zero vector.
double similarity(std::span<const double> a, std::span<const double> b);

enum class TopKStrategy { largest_gap, fixed_k, threshold };

std::string_view to_string(TopKStrategy strategy);
TopKStrategy parse_top_k_strategy(std::string_view name);

enum class QueryText { keyword, name };

struct RetrievalConfig {
    TopKStrategy strategy = TopKStrategy::largest_gap;
    std::size_t k_min = 1;
    std::size_t k_max = 10;
    std::size_t fixed_k = 5;       // fixed_k strategy
    double threshold = 0.2;        // threshold strategy: keep scores >= threshold, clamped to [k_min, k_max]
    QueryText query = QueryText::keyword;

    void validate() const;
};

// Number of leading entries of a descending score list to keep.
//   largest_gap: k in [k_min, min(k_max, n)] maximizing scores[k-1] - scores[k]
//                (the drop after position k; zero when k == n), ties to the smaller k.
// An empty list yields 0; fewer than k_min scores yield all of them.
std::size_t adaptive_top_k(std::span<const double> scores, const RetrievalConfig & config = {});

struct RetrievedPost {
    std::size_t post_index = 0;
    double similarity = 0.0;
};

struct RetrievalResult {
    int item_id = 0;
    std::string user_id;
    std::size_t k_star = 0;
    std::vector<RetrievedPost> selected;  // similarity non-increasing
};

// A user's posts embedded once; read-only afterwards.
class EmbeddedUser {
public:
    EmbeddedUser(const UserHistory & user, const EmbeddingProvider & provider, std::size_t workers = 0);

    const UserHistory & user() const noexcept { return *user_; }
    const Matrix & post_vectors() const noexcept { return vectors_; }

private:
    const UserHistory * user_;
    Matrix vectors_;
};

std::string query_text(const BdiItem & item, QueryText query);

RetrievalResult retrieve(const EmbeddedUser & user, const BdiItem & item, const EmbeddingProvider & provider,
                         const RetrievalConfig & config = {});
RetrievalResult retrieve(const UserHistory & user, const BdiItem & item, const EmbeddingProvider & provider,
                         const RetrievalConfig & config = {});

// Ranks already-embedded posts against a query vector: similarity descending,
// ties by post index.
RetrievalResult rank_posts(const Matrix & post_vectors, std::span<const double> query, const RetrievalConfig & config);

} // namespace steercal
