#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace transfusor {

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partial file. IoError on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace transfusor
