#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace dgpo::world {

// Answer normalization used by exact match and hit tests: lowercase, strip
// punctuation, collapse whitespace, drop one leading article (a/an/the).
std::string normalize_answer(std::string_view text);

// True when the normalized needle occurs in the normalized haystack on
// word boundaries.
bool contains_normalized(std::string_view haystack, std::string_view needle);

// Exact match after normalization; an absent prediction never matches.
bool exact_match(const std::optional<std::string>& prediction, std::string_view gold);

// Whitespace-collapsed copy with no leading/trailing spaces.
std::string collapse_whitespace(std::string_view text);

}  // namespace dgpo::world
