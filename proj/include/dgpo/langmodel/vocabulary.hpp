#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dgpo::langmodel {

enum class Tag { kThink, kSearch, kInformation, kAnswer };

std::string_view tag_name(Tag tag);

struct TagToken {
  Tag tag;
  bool closing;
};

class UnknownTokenError : public std::invalid_argument {
 public:
  explicit UnknownTokenError(const std::string& token)
      : std::invalid_argument("unknown token '" + token + "'"), token_(token) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

// Closed word-level vocabulary. Ids 0..2 are PAD/BOS/EOS, ids 3..10 the
// eight tag tokens, followed by the supplied words in order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  explicit Vocabulary(const std::vector<std::string>& words);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;

  static constexpr int open_tag(Tag t) { return 3 + 2 * static_cast<int>(t); }
  static constexpr int close_tag(Tag t) { return 4 + 2 * static_cast<int>(t); }
  static std::optional<TagToken> tag_of(int id);
  static bool is_special(int id) { return id >= 0 && id <= 2; }
  // Punctuation tokens split off by encode().
  static bool is_punctuation(std::string_view token);

  // Splits on whitespace, then separates punctuation and tag tokens.
  // Throws UnknownTokenError for out-of-vocabulary words.
  std::vector<int> encode(std::string_view text) const;
  // Inverse of encode() for canonically spaced text.
  std::string decode(std::span<const int> ids) const;

  std::vector<std::string> words() const;  // tokens after the fixed prefix
  std::string digest() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Splits text into token strings without vocabulary lookup.
std::vector<std::string> split_tokens(std::string_view text);

}  // namespace dgpo::langmodel
