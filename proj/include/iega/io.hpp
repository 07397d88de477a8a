#pragma once

#include <filesystem>
#include <string>

namespace iega {

// Writes `content` to a sibling temporary file and renames it over `path`,
// so readers never observe a partially written file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Throws IoError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

}  // namespace iega
