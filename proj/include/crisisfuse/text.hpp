#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace crisisfuse::text {

/// Shared normalization for keyword indexing and relevance scoring:
/// ASCII-lowercase, apostrophes dropped, other ASCII punctuation treated as
/// whitespace, then split on whitespace. Non-ASCII bytes pass through.
std::vector<std::string> tokenize(std::string_view input);

std::string to_lower_ascii(std::string_view input);
std::string trim(std::string_view input);

/// Collapses whitespace runs to single spaces and lowercases; used for
/// fuzzy text comparison.
std::string squash(std::string_view input);

/// Number of Unicode code points in a UTF-8 string (invalid bytes count as one).
std::size_t code_point_count(std::string_view utf8);

/// Byte offset of every code point boundary, including the end.
std::vector<std::size_t> code_point_offsets(std::string_view utf8);

/// Normalized Levenshtein distance in [0, 1] over bytes.
double normalized_edit_distance(std::string_view a, std::string_view b);

}  // namespace crisisfuse::text
