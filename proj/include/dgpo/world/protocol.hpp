#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgpo/langmodel/vocabulary.hpp"

namespace dgpo::world {

// Instruction text placed before every question.
std::string prompt_text(std::string_view question);

// BOS followed by the encoded prompt.
std::vector<int> encode_prompt(const langmodel::Vocabulary& vocab, std::string_view question);

// Question text carried by a context that starts with a prompt, or nullopt if
// the context holds no recognisable prompt.
std::optional<std::string> question_from_context(const langmodel::Vocabulary& vocab,
                                                 std::span<const int> context);

// Number of leading prompt tokens: everything before the first tag token.
std::size_t prompt_length(std::span<const int> context);

}  // namespace dgpo::world
