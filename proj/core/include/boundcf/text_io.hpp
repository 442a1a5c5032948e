#pragma once

// Small text helpers shared by the CSV/report writers and the CLI.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace boundcf::text {

// 17 significant digits, enough for an exact double round trip.
std::string exact(double v);
// Fixed-point with `digits` decimals, for human-facing tables.
std::string fixed(double v, int digits);

std::string read_file(const std::filesystem::path& path);
// Creates parent directories as needed. Throws RuntimeFailure on I/O errors.
void write_file(const std::filesystem::path& path, std::string_view content);

// Comma split with surrounding whitespace trimmed; no quoting support.
std::vector<std::string> split_csv_line(std::string_view line);
std::vector<std::string> lines(std::string_view text);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Left-aligned first column, right-aligned others, single-space gutters.
std::string table(const std::vector<std::vector<std::string>>& rows);

}  // namespace boundcf::text
