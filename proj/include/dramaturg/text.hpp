#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared across modules.
namespace dramaturg::text {

std::string_view trim(std::string_view s);
std::string trim_copy(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
std::vector<std::string_view> split_lines(std::string_view s);

/// Trims every line and joins the non-empty ones with single spaces.
std::string unwrap_lines(std::string_view s);

/// Decodes UTF-8 into code points; invalid bytes map to U+FFFD one byte at a time.
std::u32string utf8_decode(std::string_view s);
std::size_t utf8_length(std::string_view s);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace dramaturg::text
