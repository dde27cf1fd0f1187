#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cuem {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Collapses runs of whitespace to single spaces and trims the ends.
std::string collapse_whitespace(std::string_view s);

/// Lowercased alphanumeric tokens; everything else is a separator.
std::vector<std::string> tokenize(std::string_view s);

std::set<std::string> token_set(std::string_view s);

/// Splits on whitespace only, preserving case. Used by sequence metrics.
std::vector<std::string> split_whitespace(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool contains_ci(std::string_view haystack, std::string_view needle);

bool is_stopword(std::string_view token);

/// Largest prefix of `s` with at most `max_chars` characters, cut at a word
/// boundary when one exists, trailing whitespace trimmed.
std::string truncate_at_word(std::string_view s, std::size_t max_chars);

}  // namespace cuem
