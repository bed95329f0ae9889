#pragma once

#include "steercal/sheet.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace steercal {

struct RelevanceRecord {
    std::string post_id;
    int item_id = 0;       // 1..21
    std::string text;
    int label = 0;         // 1 relevant, 0 non-relevant

    friend bool operator==(const RelevanceRecord &, const RelevanceRecord &) = default;
};

struct UserHistory {
    std::string user_id;
    std::vector<std::string> posts;
    std::optional<AnswerSheet> true_sheet;

    friend bool operator==(const UserHistory &, const UserHistory &) = default;
};

// Field names of the on-disk records; licensed corpora with different names
// are read by overriding these.
struct FieldMap {
    std::string post_id = "post_id";
    std::string item_id = "item_id";
    std::string text = "text";
    std::string label = "label";
    std::string user_id = "user_id";
    std::string posts = "posts";
    std::string bdi = "bdi";
};

inline constexpr const char * kRelevanceSchema = "steercal.relevance";
inline constexpr const char * kUsersSchema = "steercal.users";
inline constexpr int kSchemaVersion = 1;

// Newline-delimited JSON with an optional schema header line. Malformed lines
// raise DataError carrying the 1-based line number. Per-item label counts are
// written to `log` when given.
std::vector<RelevanceRecord> load_relevance_corpus(const std::filesystem::path & path, const FieldMap & fields = {},
                                                   std::ostream * log = nullptr);
std::string serialize_relevance_corpus(std::span<const RelevanceRecord> records);
void save_relevance_corpus(const std::filesystem::path & path, std::span<const RelevanceRecord> records);

std::vector<UserHistory> load_user_histories(const std::filesystem::path & path, const FieldMap & fields = {});
std::string serialize_user_histories(std::span<const UserHistory> users);
void save_user_histories(const std::filesystem::path & path, std::span<const UserHistory> users);

struct LabelCounts {
    std::size_t relevant = 0;
    std::size_t non_relevant = 0;
};
std::map<int, LabelCounts> label_counts(std::span<const RelevanceRecord> records);

struct SplitSpec {
    std::array<double, 3> fractions{0.30, 0.30, 0.40}; // train, validation, test
    std::uint64_t seed = 0;
    bool stratify = true; // strata are item_id x label

    void validate() const;
};

struct CorpusSplit {
    std::vector<RelevanceRecord> train;
    std::vector<RelevanceRecord> val;
    std::vector<RelevanceRecord> test;
};

// Largest-remainder apportionment of n items over the fractions; ties on the
// remainder go to the earlier split.
std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3> & fractions);

// Stratified, seeded partition. Within every split, records keep their input
// order. Throws DataError when a stratum cannot give each split a record.
CorpusSplit split(std::span<const RelevanceRecord> records, const SplitSpec & spec);

} // namespace steercal
