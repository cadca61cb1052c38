#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace claimvec::io {

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place, so readers see
/// either the old content or the new content, never a partial file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s) noexcept;

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);
std::string format_float(float v);
bool parse_double(std::string_view s, double& out) noexcept;
bool parse_int(std::string_view s, long long& out) noexcept;

}  // namespace claimvec::io
