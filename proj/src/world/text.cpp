#include "dgpo/world/text.hpp"

#include <cctype>

namespace dgpo::world {

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::string s;
  s.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) {
      s.push_back(' ');
    } else {
      s.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  s = collapse_whitespace(s);
  for (std::string_view article : {"a ", "an ", "the "}) {
    if (s.rfind(article, 0) == 0) {
      s.erase(0, article.size());
      break;
    }
  }
  return s;
}

bool contains_normalized(std::string_view haystack, std::string_view needle) {
  const std::string n = normalize_answer(needle);
  if (n.empty()) return false;
  std::string h;
  for (char c : haystack) {
    const auto u = static_cast<unsigned char>(c);
    h.push_back(std::ispunct(u) ? ' ' : static_cast<char>(std::tolower(u)));
  }
  h = " " + collapse_whitespace(h) + " ";
  return h.find(" " + n + " ") != std::string::npos;
}

bool exact_match(const std::optional<std::string>& prediction, std::string_view gold) {
  return prediction && normalize_answer(*prediction) == normalize_answer(gold);
}

}  // namespace dgpo::world
