#include "dgpo/episode/grammar.hpp"

#include <algorithm>

namespace dgpo::episode {

using langmodel::Tag;
using langmodel::Vocabulary;

std::string_view span_kind_name(SpanKind kind) {
  switch (kind) {
    case SpanKind::kPrompt: return "prompt";
    case SpanKind::kThink: return "think";
    case SpanKind::kSearch: return "search";
    case SpanKind::kInformation: return "information";
    case SpanKind::kAnswer: return "answer";
    case SpanKind::kEos: return "eos";
  }
  return "?";
}

SpanKind span_kind_of(Tag tag) {
  switch (tag) {
    case Tag::kThink: return SpanKind::kThink;
    case Tag::kSearch: return SpanKind::kSearch;
    case Tag::kInformation: return SpanKind::kInformation;
    case Tag::kAnswer: return SpanKind::kAnswer;
  }
  return SpanKind::kThink;
}

std::vector<Span> ParseResult::spans_of(SpanKind kind) const {
  std::vector<Span> out;
  for (const auto& s : spans)
    if (s.kind == kind) out.push_back(s);
  return out;
}

GrammarState::Verdict GrammarState::feed(int token, bool from_engine) {
  auto fail = [&](std::string msg) {
    diagnostic_ = std::move(msg);
    return Verdict::kMalformed;
  };
  if (ended_) return fail("token after end of episode");
  const auto tag = Vocabulary::tag_of(token);

  if (open_) {
    if (!tag) {
      if (Vocabulary::is_special(token)) {
        return fail("special token inside <" + std::string(tag_name(*open_)) + ">");
      }
      return Verdict::kContinue;
    }
    if (!tag->closing || tag->tag != *open_) {
      return fail("<" + std::string(tag_name(*open_)) + "> not closed before " +
                  (tag->closing ? "</" : "<") + std::string(tag_name(tag->tag)) + ">");
    }
    if (tag->tag == Tag::kInformation && !from_engine) return fail("policy closed <information>");
    last_closed_ = *open_;
    open_.reset();
    if (*last_closed_ == Tag::kSearch) return Verdict::kClosedSearch;
    if (*last_closed_ == Tag::kAnswer) return Verdict::kClosedAnswer;
    return Verdict::kContinue;
  }

  if (token == Vocabulary::kEos) {
    if (last_closed_ == Tag::kSearch) return fail("episode ended before search results");
    ended_ = true;
    return Verdict::kEos;
  }
  if (!tag) return fail("token outside any block");
  if (tag->closing) return fail("stray </" + std::string(tag_name(tag->tag)) + ">");
  if (last_closed_ == Tag::kAnswer) return fail("block after <answer>");
  if (tag->tag == Tag::kInformation) {
    if (!from_engine) return fail("policy opened <information>");
    if (started_ && last_closed_ != Tag::kSearch) return fail("<information> without a search");
  } else if (last_closed_ == Tag::kSearch) {
    return fail("<search> not followed by <information>");
  }
  started_ = true;
  open_ = tag->tag;
  return Verdict::kContinue;
}

ParseResult parse_trajectory(std::span<const int> tokens, std::optional<std::size_t> prompt_end) {
  ParseResult result;
  std::size_t start = 0;
  if (prompt_end) {
    start = std::min(*prompt_end, tokens.size());
  } else {
    while (start < tokens.size() && !Vocabulary::tag_of(tokens[start]) &&
           tokens[start] != Vocabulary::kEos) {
      ++start;
    }
  }
  if (start > 0) result.spans.push_back({SpanKind::kPrompt, 0, start});

  GrammarState g;
  std::size_t block_start = start;
  for (std::size_t i = start; i < tokens.size(); ++i) {
    const bool was_open = g.open_block().has_value();
    const auto open_tag = g.open_block();
    const auto v = g.feed(tokens[i], true);
    if (v == GrammarState::Verdict::kMalformed) {
      result.well_formed = false;
      result.error_position = i;
      result.diagnostic = g.diagnostic();
      return result;
    }
    if (v == GrammarState::Verdict::kEos) {
      result.spans.push_back({SpanKind::kEos, i, i + 1});
      continue;
    }
    if (!was_open) {
      block_start = i;
    } else if (!g.open_block()) {
      result.spans.push_back({span_kind_of(*open_tag), block_start, i + 1});
    }
  }
  if (g.open_block()) {
    result.well_formed = false;
    result.error_position = tokens.size();
    result.diagnostic = "unclosed <" + std::string(tag_name(*g.open_block())) + ">";
  }
  return result;
}

}  // namespace dgpo::episode
