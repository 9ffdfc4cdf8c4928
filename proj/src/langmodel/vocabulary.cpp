#include "dgpo/langmodel/vocabulary.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "dgpo/util/hashing.hpp"

namespace dgpo::langmodel {

namespace {

constexpr std::array<std::string_view, 11> kFixedTokens = {
    "<pad>",    "<bos>",     "<eos>",         "<think>",        "</think>", "<search>",
    "</search>", "<information>", "</information>", "<answer>", "</answer>"};

constexpr std::string_view kPunct = "():\".,?";

bool is_number(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

std::string_view tag_name(Tag tag) {
  switch (tag) {
    case Tag::kThink: return "think";
    case Tag::kSearch: return "search";
    case Tag::kInformation: return "information";
    case Tag::kAnswer: return "answer";
  }
  return "?";
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  for (auto t : kFixedTokens) tokens_.emplace_back(t);
  for (const auto& w : words) tokens_.push_back(w);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw std::invalid_argument("Vocabulary: empty token");
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("Vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const {
  if (auto i = find(token)) return *i;
  throw UnknownTokenError(std::string(token));
}

std::optional<TagToken> Vocabulary::tag_of(int id) {
  if (id < 3 || id > 10) return std::nullopt;
  return TagToken{static_cast<Tag>((id - 3) / 2), (id - 3) % 2 == 1};
}

bool Vocabulary::is_punctuation(std::string_view token) {
  return token.size() == 1 && kPunct.find(token[0]) != std::string_view::npos;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      const auto close = text.find('>', i);
      if (close != std::string_view::npos) {
        out.emplace_back(text.substr(i, close - i + 1));
        i = close + 1;
        continue;
      }
    }
    if (kPunct.find(static_cast<char>(c)) != std::string_view::npos) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) &&
           kPunct.find(text[j]) == std::string_view::npos && text[j] != '<') {
      ++j;
    }
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : split_tokens(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  bool quote_open = false;
  bool glue_next = false;
  std::string_view prev;
  for (int id : ids) {
    const std::string& t = token(id);
    bool glue = glue_next || out.empty();
    glue_next = false;
    if (t == "\"") {
      if (quote_open) {
        glue = true;
      } else {
        glue_next = true;
      }
      quote_open = !quote_open;
    } else if (t == ")" || t == ":" || t == "." || t == "," || t == "?") {
      glue = true;
    } else if (t == "(") {
      if (is_number(prev)) glue = true;
      glue_next = true;
    }
    if (!glue) out.push_back(' ');
    out += t;
    prev = t;
  }
  return out;
}

std::vector<std::string> Vocabulary::words() const {
  return {tokens_.begin() + static_cast<std::ptrdiff_t>(kFixedTokens.size()), tokens_.end()};
}

std::string Vocabulary::digest() const {
  util::Digest d;
  for (const auto& t : tokens_) d.update(t).update("\n");
  return d.hex();
}

}  // namespace dgpo::langmodel
