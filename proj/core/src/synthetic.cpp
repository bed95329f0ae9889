#include "steercal/synthetic.hpp"

#include "steercal/error.hpp"
#include "steercal/parallel.hpp"
#include "steercal/rng.hpp"
#include "steercal/templates.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace steercal {

namespace {

// Residual-stream coordinates with planted meaning; the remaining coordinates
// carry random token identity.
enum Coord : std::size_t {
    kOne = 0,      // 1 for every token
    kContent = 1,  // 1 for evidence words
    kRel = 2,      // evidence level of a word; mean evidence after block 1
    kId = 3,       // -1 / +1 for the answer tokens "0" / "1"
    kAgr = 4,      // agreement between answer and (biased) evidence
    kQ = 5,        // answer cue
    kFill = 6,     // norm filler of option tokens
    kFirstFree = 7,
};

constexpr double kAttnGain = 7.75;     // query/key gain of the evidence-reading head
constexpr double kReadGain = 1.0;      // evidence written into kRel
constexpr double kAgrSlope = 6.67;     // slope of the agreement feature around the threshold
constexpr double kAgrSat = 1.0;        // saturation level of the agreement feature
constexpr double kAgrOut = 1.0;
constexpr double kHeadEvidence = 4.0;  // output-head slope on evidence per option step
constexpr double kHeadAnswer = 4.0;    // output-head slope on the answer identity per option step
constexpr double kCue = 2.0;

constexpr double kLevelMin = -0.5;
constexpr double kLevelStep = 0.1;
constexpr int kLevelCount = 41;        // -0.5 .. 3.5
constexpr std::size_t kFillerWords = 48;
constexpr std::size_t kFillerPerPost = 2;
constexpr std::size_t kUnknownBuckets = 16;

struct Lexicon {
    std::vector<std::string> evidence;  // index = level
    std::vector<std::string> filler;
    std::unordered_map<std::string, int> level_of;
    Vocabulary vocabulary{{"0", "1", "2", "3"}, 1};
};

std::string pseudo_word(Rng & rng, int syllables) {
    static constexpr char consonants[] = "bdfgklmnprstvz";
    static constexpr char vowels[] = "aeiou";
    std::string w;
    for (int s = 0; s < syllables; ++s) {
        w.push_back(consonants[rng.below(sizeof consonants - 1)]);
        w.push_back(vowels[rng.below(sizeof vowels - 1)]);
    }
    return w;
}

Lexicon make_lexicon() {
    Lexicon lex;
    std::vector<std::string> words = {"0", "1", "2", "3", ":"};
    std::set<std::string> taken(words.begin(), words.end());

    // Template and catalogue pieces first so pseudo-words never shadow them.
    std::vector<std::string> fixed;
    const auto templates = PromptTemplates::defaults();
    for (const auto * text : {&templates.relevance, &templates.questionnaire}) {
        for (auto & p : split_words(*text)) {
            fixed.push_back(std::move(p));
        }
    }
    for (const auto & item : bdi_catalogue()) {
        for (auto & p : split_words(item.name)) {
            fixed.push_back(std::move(p));
        }
        fixed.push_back(item.keyword);
        for (const auto & option : item.option_texts) {
            for (auto & p : split_words(option)) {
                fixed.push_back(std::move(p));
            }
        }
    }
    std::set<std::string> reserved(fixed.begin(), fixed.end());

    Rng rng(derive_seed(0x5e1ec7ULL, "synthetic-lexicon"));
    auto fresh = [&](int syllables) {
        for (;;) {
            std::string w = pseudo_word(rng, syllables);
            if (!taken.contains(w) && !reserved.contains(w)) {
                taken.insert(w);
                return w;
            }
        }
    };
    for (int level = 0; level < kLevelCount; ++level) {
        lex.evidence.push_back(fresh(3));
        lex.level_of.emplace(lex.evidence.back(), level);
        words.push_back(lex.evidence.back());
    }
    for (std::size_t i = 0; i < kFillerWords; ++i) {
        lex.filler.push_back(fresh(2));
        words.push_back(lex.filler.back());
    }
    for (const auto & w : fixed) {
        if (taken.insert(w).second) {
            words.push_back(w);
        }
    }
    lex.vocabulary = Vocabulary(std::move(words), kUnknownBuckets);
    return lex;
}

const Lexicon & lexicon() {
    static const Lexicon lex = make_lexicon();
    return lex;
}

double level_value(int level) {
    return kLevelMin + kLevelStep * level;
}

int quantize(double evidence) {
    const auto level = static_cast<int>(std::lround((evidence - kLevelMin) / kLevelStep));
    return std::clamp(level, 0, kLevelCount - 1);
}

// Random unit direction in the free coordinates, scaled to `length`.
void fill_free(Rng & rng, std::span<double> row, double length) {
    double sum_sq = 0.0;
    for (std::size_t c = kFirstFree; c < row.size(); ++c) {
        row[c] = rng.normal();
        sum_sq += row[c] * row[c];
    }
    const double scale = sum_sq > 0.0 ? length / std::sqrt(sum_sq) : 0.0;
    for (std::size_t c = kFirstFree; c < row.size(); ++c) {
        row[c] *= scale;
    }
}

ModelConfig model_config(const SyntheticConfig & config) {
    ModelConfig mc;
    mc.num_layers = config.num_layers;
    mc.hidden_dim = config.hidden_dim;
    mc.num_heads = config.num_heads;
    mc.max_seq_len = config.max_seq_len;
    mc.vocab_size = static_cast<int>(synthetic_vocabulary().size());
    mc.seed = derive_seed(config.seed, "synthetic-model");
    return mc;
}

// A post: evidence words around `latent`, the item keyword repeated as a topic
// marker and a little filler.
std::string compose_post(Rng & rng, double latent, double jitter, const std::string & keyword, std::size_t n_words) {
    const auto & lex = lexicon();
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n_words; ++i) {
        words.push_back(lex.evidence[static_cast<std::size_t>(quantize(latent + jitter * rng.normal()))]);
    }
    if (!keyword.empty()) {
        words.insert(words.end(), std::max<std::size_t>(1, n_words / 2), keyword);
    }
    for (std::size_t i = 0; i < kFillerPerPost; ++i) {
        words.push_back(lex.filler[rng.below(lex.filler.size())]);
    }
    rng.shuffle(words);
    std::string text;
    for (const auto & w : words) {
        text += text.empty() ? "" : " ";
        text += w;
    }
    return text + ".";
}

std::string filler_post(Rng & rng, std::size_t n_words) {
    const auto & lex = lexicon();
    std::string text;
    for (std::size_t i = 0; i < n_words; ++i) {
        text += text.empty() ? "" : " ";
        text += lex.filler[rng.below(lex.filler.size())];
    }
    return text + ".";
}

std::string padded(std::size_t value, int width) {
    std::string s = std::to_string(value);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

} // namespace

void SyntheticConfig::validate() const {
    if (n_records < static_cast<std::size_t>(kItemCount)) {
        throw ConfigError("synthetic: n_records must be at least 21");
    }
    if (!(relevant_fraction > 0.0 && relevant_fraction < 1.0)) {
        throw ConfigError("synthetic: relevant_fraction must lie in (0, 1)");
    }
    if (!(signal_strength >= 0.0) || !(noise_std >= 0.0)) {
        throw ConfigError("synthetic: signal_strength and noise_std must be non-negative");
    }
    if (!std::isfinite(cautious_bias)) {
        throw ConfigError("synthetic: cautious_bias must be finite");
    }
    if (words_per_post == 0) {
        throw ConfigError("synthetic: words_per_post must be positive");
    }
    if (hidden_dim < 16) {
        throw ConfigError("synthetic: hidden_dim must be at least 16");
    }
    if (num_heads <= 0 || hidden_dim % num_heads != 0 || hidden_dim / num_heads < 1) {
        throw ConfigError("synthetic: num_heads must divide hidden_dim");
    }
    if (num_layers < 2 || num_layers % 2 != 0) {
        throw ConfigError("synthetic: num_layers must be an even number >= 2");
    }
    if (max_seq_len < 64) {
        throw ConfigError("synthetic: max_seq_len must be at least 64");
    }
}

const Vocabulary & synthetic_vocabulary() {
    return lexicon().vocabulary;
}

std::optional<double> word_evidence(std::string_view word) {
    const auto & lex = lexicon();
    if (auto it = lex.level_of.find(std::string(word)); it != lex.level_of.end()) {
        return level_value(it->second);
    }
    return std::nullopt;
}

double planted_evidence(std::string_view text) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto & piece : split_words(text)) {
        if (const auto e = word_evidence(piece)) {
            sum += *e;
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

ToyModel build_planted_model(const SyntheticConfig & config) {
    config.validate();
    const ModelConfig mc = model_config(config);
    const Vocabulary & vocab = synthetic_vocabulary();
    ModelWeights w = random_weights(mc);
    const auto d = static_cast<std::size_t>(mc.hidden_dim);
    const double ne = std::sqrt(static_cast<double>(d));
    Rng rng(derive_seed(config.seed, "synthetic-embeddings"));

    // Token embeddings, all of norm sqrt(d) so RMSNorm leaves them near unit scale.
    w.token_embedding = Matrix(vocab.size(), d);
    for (std::size_t t = 0; t < vocab.size(); ++t) {
        auto row = w.token_embedding.row(t);
        row[kOne] = 1.0;
        const std::string piece = vocab.piece(static_cast<TokenId>(t));
        if (t < static_cast<std::size_t>(kOptionCount)) {
            const double id = t == 0 ? -1.0 : (t == 1 ? 1.0 : 0.0);
            row[kId] = id;
            row[kFill] = std::sqrt(ne * ne - 1.0 - id * id);
            for (std::size_t c = kFirstFree; c < d; ++c) {
                row[c] = 0.01 * rng.normal();
            }
        } else if (piece == ":") {
            row[kQ] = kCue;
            fill_free(rng, row, std::sqrt(ne * ne - 1.0 - kCue * kCue));
        } else if (const auto e = word_evidence(piece)) {
            row[kContent] = 1.0;
            row[kRel] = *e;
            fill_free(rng, row, std::sqrt(ne * ne - 2.0 - *e * *e));
        } else {
            fill_free(rng, row, std::sqrt(ne * ne - 1.0));
        }
    }

    // Block 1, head 0: every position attends to the evidence words before it
    // and copies their mean level into kRel.
    const auto dh = static_cast<std::size_t>(mc.head_dim());
    BlockWeights & b = w.blocks.front();
    for (std::size_t r = 0; r < dh; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            b.wq(r, c) = 0.0;
            b.wk(r, c) = 0.0;
            b.wv(r, c) = 0.0;
            b.wo(c, r) = 0.0;
        }
    }
    b.wq(0, kOne) = kAttnGain;
    b.wk(0, kContent) = kAttnGain;
    b.wv(0, kRel) = 1.0;
    b.wo(kRel, 0) = kReadGain;

    // Block 1 MLP, neurons 0..3: kAgr = 2 * id * clip(slope * (evidence - theta), +-sat),
    // with theta shifted down by the cautious bias.
    const double theta = 0.5 - config.cautious_bias / kHeadEvidence;
    const double id_sign[4] = {1.0, 1.0, -1.0, -1.0};
    const double r_sign[4] = {1.0, -1.0, -1.0, 1.0};
    const double out_sign[4] = {1.0, -1.0, 1.0, -1.0};
    for (std::size_t u = 0; u < 4; ++u) {
        for (std::size_t c = 0; c < d; ++c) {
            b.w_in(u, c) = 0.0;
            b.w_out(c, u) = 0.0;
        }
        b.w_in(u, kId) = id_sign[u] * kAgrSat;
        b.w_in(u, kRel) = r_sign[u] * kAgrSlope;
        b.w_in(u, kOne) = -r_sign[u] * kAgrSlope * kReadGain * theta;
        b.b_in[u] = 0.0;
        b.w_out(kAgr, u) = out_sign[u] * kAgrOut;
    }

    // Output head: option k scores k * evidence - k^2 / 2 (peaks at k = evidence),
    // follows the answer identity, and carries the cautious offset k * bias.
    for (int k = 0; k < kOptionCount; ++k) {
        auto row = w.unembedding.row(static_cast<std::size_t>(k));
        std::fill(row.begin(), row.end(), 0.0);
        row[kRel] = kHeadEvidence * k;
        row[kQ] = -kHeadEvidence * kReadGain * k * k / (2.0 * kCue);
        row[kId] = kHeadAnswer * k;
        w.output_bias[static_cast<std::size_t>(k)] = config.cautious_bias * k;
    }
    return ToyModel(mc, vocab, std::move(w));
}

double SyntheticWorld::bayes_false_positive_rate() const {
    std::size_t negatives = 0, above = 0;
    for (const auto & r : corpus) {
        if (r.label == 0) {
            ++negatives;
            above += planted_evidence(r.text) > 0.5 ? 1 : 0;
        }
    }
    return negatives == 0 ? 0.0 : static_cast<double>(above) / static_cast<double>(negatives);
}

SyntheticWorld generate_synthetic(const SyntheticConfig & config) {
    config.validate();
    SyntheticWorld world;
    world.model = std::make_shared<const ToyModel>(build_planted_model(config));
    const double jitter = 0.5 * config.noise_std;
    const auto & items = bdi_catalogue();

    // Relevance corpus, one independent stream per item.
    std::vector<std::vector<RelevanceRecord>> per_item(items.size());
    const std::size_t base = config.n_records / items.size();
    const std::size_t extra = config.n_records % items.size();
    parallel_for(items.size(), [&](std::size_t j) {
        const BdiItem & item = items[j];
        Rng rng(derive_seed(config.seed, "relevance-item-" + std::to_string(item.item_id)));
        const std::size_t n = base + (j < extra ? 1 : 0);
        const auto n_relevant = static_cast<std::size_t>(
            std::clamp<long>(std::lround(static_cast<double>(n) * config.relevant_fraction), 1, static_cast<long>(n) - 1));
        std::vector<int> labels(n, 0);
        std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_relevant), 1);
        rng.shuffle(labels);
        for (std::size_t i = 0; i < n; ++i) {
            const double latent =
                0.5 + config.signal_strength * (2.0 * labels[i] - 1.0) + config.noise_std * rng.normal();
            RelevanceRecord r;
            r.post_id = "p" + padded(static_cast<std::size_t>(item.item_id), 2) + "-" + padded(i, 4);
            r.item_id = item.item_id;
            r.label = labels[i];
            r.text = compose_post(rng, latent, jitter, item.keyword, config.words_per_post);
            per_item[j].push_back(std::move(r));
        }
    });
    for (auto & records : per_item) {
        std::move(records.begin(), records.end(), std::back_inserter(world.corpus));
    }

    // Cohort: each user has a severity level; item scores scatter around it and
    // every item gets one to three posts whose evidence matches its score.
    world.users.resize(config.n_users);
    world.item_posts.resize(config.n_users);
    parallel_for(config.n_users, [&](std::size_t u) {
        Rng rng(derive_seed(config.seed, "user-" + std::to_string(u)));
        const double level = rng.uniform(-0.3, 2.3);
        AnswerSheet::Scores scores{};
        std::vector<std::pair<std::string, int>> posts;  // text, item index or -1
        for (std::size_t j = 0; j < items.size(); ++j) {
            scores[j] = std::clamp(static_cast<int>(std::lround(level + 0.6 * rng.normal())), 0, kMaxItemScore);
            const std::size_t n_posts = 1 + static_cast<std::size_t>(rng.below(3));
            for (std::size_t k = 0; k < n_posts; ++k) {
                const double latent = scores[j] + config.noise_std * rng.normal();
                posts.emplace_back(compose_post(rng, latent, jitter, items[j].keyword, config.words_per_post),
                                   static_cast<int>(j));
            }
        }
        for (std::size_t k = 0; k < config.filler_posts; ++k) {
            posts.emplace_back(filler_post(rng, config.words_per_post + kFillerPerPost), -1);
        }
        rng.shuffle(posts);

        UserHistory & user = world.users[u];
        user.user_id = "u" + padded(u, 3);
        for (std::size_t i = 0; i < posts.size(); ++i) {
            user.posts.push_back(posts[i].first);
            if (posts[i].second >= 0) {
                world.item_posts[u][static_cast<std::size_t>(posts[i].second)].push_back(i);
            }
        }
        user.true_sheet = AnswerSheet(user.user_id, scores);
    });
    return world;
}

} // namespace steercal
