#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace degc {

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

/// 64-bit FNV-1a, hex encoded.
std::string content_hash(std::string_view data);

}  // namespace degc
