#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace steercal {

// Writes to a sibling staging file and renames it into place, so readers never
// observe a partially written artifact. Parent directories are created.
void write_file_atomic(const std::filesystem::path & path, std::string_view content);

std::string read_file(const std::filesystem::path & path);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

} // namespace steercal
