#include "steercal/datasets.hpp"

#include "steercal/error.hpp"
#include "steercal/io.hpp"
#include "steercal/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace steercal {

using nlohmann::json;

namespace {

std::string line_prefix(const std::filesystem::path & path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

// Returns true when the line is a schema header (validated against `schema`).
bool consume_header(const json & obj, const char * schema, const std::filesystem::path & path, std::size_t line) {
    if (!obj.is_object() || !obj.contains("schema")) {
        return false;
    }
    if (!obj["schema"].is_string() || obj["schema"].get<std::string>() != schema) {
        throw DataError(line_prefix(path, line) + "expected schema \"" + schema + "\"");
    }
    if (!obj.contains("version") || !obj["version"].is_number_integer() ||
        obj["version"].get<int>() != kSchemaVersion) {
        throw DataError(line_prefix(path, line) + "unsupported schema version");
    }
    return true;
}

const json & field(const json & obj, const std::string & name, const std::filesystem::path & path,
                   std::size_t line) {
    auto it = obj.find(name);
    if (it == obj.end()) {
        throw DataError(line_prefix(path, line) + "missing field \"" + name + "\"");
    }
    return *it;
}

std::string string_field(const json & obj, const std::string & name, const std::filesystem::path & path,
                         std::size_t line) {
    const json & v = field(obj, name, path, line);
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer()) {
        return std::to_string(v.get<long long>());
    }
    throw DataError(line_prefix(path, line) + "field \"" + name + "\" must be a string");
}

template <typename Fn>
void for_each_line(const std::filesystem::path & path, Fn && fn) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::parse_error & e) {
            throw DataError(line_prefix(path, line) + "malformed JSON: " + e.what());
        }
        if (!obj.is_object()) {
            throw DataError(line_prefix(path, line) + "expected a JSON object");
        }
        fn(obj, line);
    }
}

} // namespace

std::vector<RelevanceRecord> load_relevance_corpus(const std::filesystem::path & path, const FieldMap & fields,
                                                   std::ostream * log) {
    std::vector<RelevanceRecord> records;
    bool first = true;
    for_each_line(path, [&](const json & obj, std::size_t line) {
        if (first) {
            first = false;
            if (consume_header(obj, kRelevanceSchema, path, line)) {
                return;
            }
        }
        RelevanceRecord r;
        r.post_id = string_field(obj, fields.post_id, path, line);
        const json & item = field(obj, fields.item_id, path, line);
        if (!item.is_number_integer()) {
            throw DataError(line_prefix(path, line) + "field \"" + fields.item_id + "\" must be an integer");
        }
        r.item_id = item.get<int>();
        if (!is_valid_item_id(r.item_id)) {
            throw DataError(line_prefix(path, line) + "item_id " + std::to_string(r.item_id) + " outside 1..21");
        }
        r.text = string_field(obj, fields.text, path, line);
        if (r.text.empty()) {
            throw DataError(line_prefix(path, line) + "empty text");
        }
        const json & label = field(obj, fields.label, path, line);
        if (label.is_boolean()) {
            r.label = label.get<bool>() ? 1 : 0;
        } else if (label.is_number_integer() && (label.get<int>() == 0 || label.get<int>() == 1)) {
            r.label = label.get<int>();
        } else {
            throw DataError(line_prefix(path, line) + "label must be 0 or 1");
        }
        records.push_back(std::move(r));
    });
    if (log != nullptr) {
        for (const auto & [item, counts] : label_counts(records)) {
            *log << "item " << item << ": " << counts.relevant << " relevant, " << counts.non_relevant
                 << " non-relevant\n";
        }
    }
    return records;
}

std::string serialize_relevance_corpus(std::span<const RelevanceRecord> records) {
    std::ostringstream out;
    out << json{{"schema", kRelevanceSchema}, {"version", kSchemaVersion}}.dump() << '\n';
    for (const auto & r : records) {
        json obj;
        obj["post_id"] = r.post_id;
        obj["item_id"] = r.item_id;
        obj["text"] = r.text;
        obj["label"] = r.label;
        out << obj.dump() << '\n';
    }
    return out.str();
}

void save_relevance_corpus(const std::filesystem::path & path, std::span<const RelevanceRecord> records) {
    write_file_atomic(path, serialize_relevance_corpus(records));
}

std::vector<UserHistory> load_user_histories(const std::filesystem::path & path, const FieldMap & fields) {
    std::vector<UserHistory> users;
    bool first = true;
    for_each_line(path, [&](const json & obj, std::size_t line) {
        if (first) {
            first = false;
            if (consume_header(obj, kUsersSchema, path, line)) {
                return;
            }
        }
        UserHistory u;
        u.user_id = string_field(obj, fields.user_id, path, line);
        const json & posts = field(obj, fields.posts, path, line);
        if (!posts.is_array()) {
            throw DataError(line_prefix(path, line) + "field \"" + fields.posts + "\" must be an array");
        }
        for (const auto & p : posts) {
            if (!p.is_string()) {
                throw DataError(line_prefix(path, line) + "posts must be strings");
            }
            u.posts.push_back(p.get<std::string>());
        }
        if (auto it = obj.find(fields.bdi); it != obj.end() && !it->is_null()) {
            if (!it->is_array() || it->size() != kItemCount) {
                throw DataError(line_prefix(path, line) + "bdi must hold 21 scores");
            }
            AnswerSheet::Scores scores{};
            for (std::size_t i = 0; i < kItemCount; ++i) {
                const auto & s = (*it)[i];
                if (!s.is_number_integer() || s.get<int>() < 0 || s.get<int>() > kMaxItemScore) {
                    throw DataError(line_prefix(path, line) + "bdi item " + std::to_string(i + 1) +
                                    " must be an integer in 0..3");
                }
                scores[i] = s.get<int>();
            }
            u.true_sheet = AnswerSheet(u.user_id, scores);
        }
        users.push_back(std::move(u));
    });
    return users;
}

std::string serialize_user_histories(std::span<const UserHistory> users) {
    std::ostringstream out;
    out << json{{"schema", kUsersSchema}, {"version", kSchemaVersion}}.dump() << '\n';
    for (const auto & u : users) {
        json obj;
        obj["user_id"] = u.user_id;
        obj["posts"] = u.posts;
        if (u.true_sheet) {
            obj["bdi"] = u.true_sheet->scores();
        } else {
            obj["bdi"] = nullptr;
        }
        out << obj.dump() << '\n';
    }
    return out.str();
}

void save_user_histories(const std::filesystem::path & path, std::span<const UserHistory> users) {
    write_file_atomic(path, serialize_user_histories(users));
}

std::map<int, LabelCounts> label_counts(std::span<const RelevanceRecord> records) {
    std::map<int, LabelCounts> counts;
    for (const auto & r : records) {
        auto & c = counts[r.item_id];
        (r.label == 1 ? c.relevant : c.non_relevant) += 1;
    }
    return counts;
}

void SplitSpec::validate() const {
    double total = 0.0;
    for (const double f : fractions) {
        if (!(f >= 0.0)) {
            throw ConfigError("split fractions must be non-negative");
        }
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1 (got " + std::to_string(total) + ")");
    }
}

std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3> & fractions) {
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        const double exact = fractions[s] * static_cast<double>(n);
        // Guard against 0.3 * 100 = 30.000000000000004 style representation error.
        const double floor_value = std::floor(exact + 1e-9);
        sizes[s] = static_cast<std::size_t>(floor_value);
        remainders[s] = std::max(0.0, exact - floor_value);
        assigned += sizes[s];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b] + 1e-12; });
    for (std::size_t i = 0; assigned < n; ++i) {
        ++sizes[order[i % 3]];
        ++assigned;
    }
    return sizes;
}

CorpusSplit split(std::span<const RelevanceRecord> records, const SplitSpec & spec) {
    spec.validate();
    std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto key = spec.stratify ? std::pair{records[i].item_id, records[i].label} : std::pair{0, 0};
        strata[key].push_back(i);
    }

    std::vector<int> assignment(records.size(), -1);
    for (auto & [key, members] : strata) {
        const auto sizes = largest_remainder(members.size(), spec.fractions);
        for (std::size_t s = 0; s < 3; ++s) {
            if (sizes[s] == 0 && spec.fractions[s] > 0.0) {
                throw DataError("stratum item " + std::to_string(key.first) + " label " +
                                std::to_string(key.second) + " has " + std::to_string(members.size()) +
                                " records, too few to populate every split");
            }
        }
        const std::uint64_t stream = (static_cast<std::uint64_t>(key.first) << 8) ^ static_cast<std::uint64_t>(key.second);
        Rng rng(derive_seed(spec.seed, stream));
        std::vector<std::size_t> shuffled = members;
        rng.shuffle(shuffled);
        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < sizes[static_cast<std::size_t>(s)]; ++k) {
                assignment[shuffled[pos++]] = s;
            }
        }
    }

    CorpusSplit out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        switch (assignment[i]) {
            case 0: out.train.push_back(records[i]); break;
            case 1: out.val.push_back(records[i]); break;
            default: out.test.push_back(records[i]); break;
        }
    }
    return out;
}

} // namespace steercal
