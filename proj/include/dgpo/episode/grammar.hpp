#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgpo/langmodel/vocabulary.hpp"

namespace dgpo::episode {

enum class SpanKind { kPrompt, kThink, kSearch, kInformation, kAnswer, kEos };

std::string_view span_kind_name(SpanKind kind);
SpanKind span_kind_of(langmodel::Tag tag);

// Half-open token range. Tagged spans include their opening and closing tags.
struct Span {
  SpanKind kind = SpanKind::kPrompt;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Span&) const = default;
};

struct ParseResult {
  std::vector<Span> spans;
  bool well_formed = true;
  // Index of the first offending token (or the sequence length for an
  // unclosed block) when malformed.
  std::optional<std::size_t> error_position;
  std::string diagnostic;

  std::vector<Span> spans_of(SpanKind kind) const;
};

// Block-level grammar over a full token sequence:
//   prompt [information] (think | search information)* [answer] [EOS]
// The leading information block is the golden-context injection. Never
// throws. A sequence that stops cleanly between blocks is well formed.
// Without `prompt_end` the prompt runs up to the first tag or EOS token.
ParseResult parse_trajectory(std::span<const int> tokens,
                             std::optional<std::size_t> prompt_end = std::nullopt);

// Incremental checker used while generating. Feed tokens after the prompt.
class GrammarState {
 public:
  enum class Verdict { kContinue, kMalformed, kClosedSearch, kClosedAnswer, kEos };

  // Information tags are accepted only when `from_engine` is set.
  Verdict feed(int token, bool from_engine = false);
  std::optional<langmodel::Tag> open_block() const { return open_; }
  std::string diagnostic() const { return diagnostic_; }

 private:
  std::optional<langmodel::Tag> open_;
  std::optional<langmodel::Tag> last_closed_;
  bool started_ = false;
  bool ended_ = false;
  std::string diagnostic_;
};

}  // namespace dgpo::episode
