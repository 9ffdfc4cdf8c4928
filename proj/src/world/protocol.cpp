#include "dgpo/world/protocol.hpp"

namespace dgpo::world {

using langmodel::Vocabulary;

std::string prompt_text(std::string_view question) {
  return "answer the given question . think first , search if needed , then answer . question: " +
         std::string(question);
}

std::vector<int> encode_prompt(const Vocabulary& vocab, std::string_view question) {
  std::vector<int> ids{Vocabulary::kBos};
  const auto body = vocab.encode(prompt_text(question));
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

std::size_t prompt_length(std::span<const int> context) {
  std::size_t n = 0;
  while (n < context.size() && !Vocabulary::tag_of(context[n])) ++n;
  return n;
}

std::optional<std::string> question_from_context(const Vocabulary& vocab,
                                                 std::span<const int> context) {
  const auto question = vocab.find("question");
  const auto colon = vocab.find(":");
  if (!question || !colon || context.empty() || context[0] != Vocabulary::kBos) return std::nullopt;
  const std::size_t end = prompt_length(context);
  for (std::size_t i = 1; i + 1 < end; ++i) {
    if (context[i] == *question && context[i + 1] == *colon) {
      if (i + 2 >= end) return std::nullopt;
      return vocab.decode(context.subspan(i + 2, end - (i + 2)));
    }
  }
  return std::nullopt;
}

}  // namespace dgpo::world
