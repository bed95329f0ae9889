#include "steercal/retrieval.hpp"

#include "steercal/error.hpp"
#include "steercal/parallel.hpp"
#include "steercal/rng.hpp"
#include "steercal/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace steercal {

ToyEmbedder::ToyEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) {
        throw InvalidArgument("ToyEmbedder: dim must be positive");
    }
}

Vector ToyEmbedder::column(const std::string & piece) const {
    {
        std::lock_guard lock(mutex_);
        if (auto it = columns_.find(piece); it != columns_.end()) {
            return it->second;
        }
    }
    Rng rng(derive_seed(seed_, fnv1a64(piece)));
    Vector col(dim_);
    for (double & x : col) {
        x = rng.normal();
    }
    std::lock_guard lock(mutex_);
    return columns_.emplace(piece, std::move(col)).first->second;
}

Vector ToyEmbedder::embed(std::string_view text) const {
    std::map<std::string, int> counts;
    for (auto & piece : split_words(text)) {
        ++counts[std::move(piece)];
    }
    Vector out(dim_, 0.0);
    for (const auto & [piece, count] : counts) {
        const Vector col = column(piece);
        for (std::size_t i = 0; i < dim_; ++i) {
            out[i] += static_cast<double>(count) * col[i];
        }
    }
    const double n = norm2(out);
    if (n == 0.0) {
        throw InvalidArgument("ToyEmbedder: cannot embed text without word pieces");
    }
    for (double & x : out) {
        x /= n;
    }
    return out;
}

double similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("similarity: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) {
        throw InvalidArgument("similarity: zero vector");
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::string_view to_string(TopKStrategy strategy) {
    switch (strategy) {
        case TopKStrategy::largest_gap: return "largest_gap";
        case TopKStrategy::fixed_k: return "fixed_k";
        case TopKStrategy::threshold: return "threshold";
    }
    return "unknown";
}

TopKStrategy parse_top_k_strategy(std::string_view name) {
    for (const auto s : {TopKStrategy::largest_gap, TopKStrategy::fixed_k, TopKStrategy::threshold}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown top-k strategy \"" + std::string(name) + "\"");
}

void RetrievalConfig::validate() const {
    if (k_min < 1 || k_min > k_max) {
        throw ConfigError("retrieval: require 1 <= k_min <= k_max (got k_min=" + std::to_string(k_min) +
                          ", k_max=" + std::to_string(k_max) + ")");
    }
    if (strategy == TopKStrategy::fixed_k && fixed_k < 1) {
        throw ConfigError("retrieval: fixed_k must be at least 1");
    }
}

std::size_t adaptive_top_k(std::span<const double> scores, const RetrievalConfig & config) {
    config.validate();
    const std::size_t n = scores.size();
    if (n == 0) {
        return 0;
    }
    if (n <= config.k_min) {
        return n;
    }
    const std::size_t hi = std::min(config.k_max, n);
    switch (config.strategy) {
        case TopKStrategy::fixed_k:
            return std::min(config.fixed_k, n);
        case TopKStrategy::threshold: {
            std::size_t k = 0;
            while (k < n && scores[k] >= config.threshold) {
                ++k;
            }
            return std::clamp(k, config.k_min, hi);
        }
        case TopKStrategy::largest_gap:
            break;
    }
    std::size_t best = config.k_min;
    double best_gap = -INFINITY;
    for (std::size_t k = config.k_min; k <= hi; ++k) {
        const double gap = k < n ? scores[k - 1] - scores[k] : 0.0;
        if (gap > best_gap) {
            best = k;
            best_gap = gap;
        }
    }
    return best;
}

EmbeddedUser::EmbeddedUser(const UserHistory & user, const EmbeddingProvider & provider, std::size_t workers)
    : user_(&user), vectors_(user.posts.size(), provider.dim()) {
    parallel_for(
        user.posts.size(),
        [&](std::size_t i) {
            Vector v;
            try {
                v = provider.embed(user.posts[i]);
            } catch (const std::exception & e) {
                throw DataError("user " + user.user_id + ": embedding post " + std::to_string(i) + " failed: " +
                                e.what());
            }
            if (v.size() != provider.dim()) {
                throw DataError("user " + user.user_id + ": embedding of post " + std::to_string(i) + " has " +
                                std::to_string(v.size()) + " dims, provider reports " +
                                std::to_string(provider.dim()));
            }
            std::copy(v.begin(), v.end(), vectors_.row(i).begin());
        },
        workers);
}

std::string query_text(const BdiItem & item, QueryText query) {
    return query == QueryText::name ? item.name : item.keyword;
}

RetrievalResult rank_posts(const Matrix & post_vectors, std::span<const double> query, const RetrievalConfig & config) {
    std::vector<RetrievedPost> ranked(post_vectors.rows());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        ranked[i] = {i, similarity(post_vectors.row(i), query)};
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RetrievedPost & a, const RetrievedPost & b) { return a.similarity > b.similarity; });
    std::vector<double> scores(ranked.size());
    std::transform(ranked.begin(), ranked.end(), scores.begin(), [](const RetrievedPost & p) { return p.similarity; });

    RetrievalResult result;
    result.k_star = adaptive_top_k(scores, config);
    ranked.resize(result.k_star);
    result.selected = std::move(ranked);
    return result;
}

RetrievalResult retrieve(const EmbeddedUser & user, const BdiItem & item, const EmbeddingProvider & provider,
                         const RetrievalConfig & config) {
    const Vector query = provider.embed(query_text(item, config.query));
    if (query.size() != user.post_vectors().cols() && user.post_vectors().rows() > 0) {
        throw DataError("retrieval: query embedding has " + std::to_string(query.size()) +
                        " dims, post embeddings have " + std::to_string(user.post_vectors().cols()));
    }
    RetrievalResult result = rank_posts(user.post_vectors(), query, config);
    result.item_id = item.item_id;
    result.user_id = user.user().user_id;
    return result;
}

RetrievalResult retrieve(const UserHistory & user, const BdiItem & item, const EmbeddingProvider & provider,
                         const RetrievalConfig & config) {
    return retrieve(EmbeddedUser(user, provider), item, provider, config);
}

} // namespace steercal
