#include "dgpo/episode/episode.hpp"

#include <random>
#include <stdexcept>

#include <json.hpp>

#include "dgpo/world/protocol.hpp"
#include "dgpo/world/text.hpp"

namespace dgpo::episode {

using langmodel::Tag;
using langmodel::Vocabulary;

void EpisodeBudget::validate() const {
  if (max_turns == 0) throw std::invalid_argument("EpisodeBudget: max_turns must be positive");
  if (max_turn_tokens == 0) throw std::invalid_argument("EpisodeBudget: max_turn_tokens must be positive");
  if (max_total_length == 0) throw std::invalid_argument("EpisodeBudget: max_total_length must be positive");
  if (retrieval_k == 0) throw std::invalid_argument("EpisodeBudget: retrieval_k must be positive");
}

std::string_view finish_reason_name(FinishReason r) {
  switch (r) {
    case FinishReason::kAnswer: return "answer";
    case FinishReason::kEos: return "eos";
    case FinishReason::kMalformed: return "malformed";
    case FinishReason::kTurnLimit: return "turn_limit";
    case FinishReason::kTokenLimit: return "token_limit";
    case FinishReason::kLengthLimit: return "length_limit";
    case FinishReason::kStopped: return "stopped";
  }
  return "?";
}

std::size_t Trajectory::generated_count() const {
  std::size_t n = 0;
  for (auto m : mask) n += m;
  return n;
}

namespace {

class Rollout {
 public:
  Rollout(const langmodel::Policy& policy, Trajectory& traj) : session_(policy.start()), traj_(traj) {}

  void inject(std::span<const int> ids) {
    for (int t : ids) {
      session_->push(t);
      traj_.tokens.push_back(t);
      traj_.mask.push_back(0);
      traj_.old_logprobs.push_back(0.0);
      traj_.values.push_back(0.0);
    }
  }

  // Chooses the next policy token (or takes `forced` when non-negative) and
  // appends it.
  int generate(double temperature, std::mt19937_64& rng, int forced) {
    const auto lp = session_->next_logprobs();
    const double value = session_->value();
    int tok = 0;
    if (forced >= 0) {
      tok = forced;
    } else if (temperature <= 0.0) {
      tok = langmodel::argmax_token(lp);
    } else {
      tok = langmodel::sample_token(lp, temperature, rng);
    }
    traj_.tokens.push_back(tok);
    traj_.mask.push_back(1);
    traj_.old_logprobs.push_back(lp[static_cast<std::size_t>(tok)]);
    traj_.values.push_back(value);
    session_->push(tok);
    return tok;
  }

 private:
  std::unique_ptr<langmodel::PolicySession> session_;
  Trajectory& traj_;
};

std::vector<int> information_block(const Vocabulary& vocab, const std::string& text) {
  std::vector<int> ids{Vocabulary::open_tag(Tag::kInformation)};
  const auto body = vocab.encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  ids.push_back(Vocabulary::close_tag(Tag::kInformation));
  return ids;
}

std::string span_text(const Vocabulary& vocab, std::span<const int> tokens, const Span& s) {
  return world::collapse_whitespace(vocab.decode(tokens.subspan(s.begin + 1, s.end - s.begin - 2)));
}

}  // namespace

Trajectory run_episode(const langmodel::Policy& policy, const world::World& world,
                       const world::QAItem& item, const EpisodeBudget& budget,
                       const EpisodeOptions& options, std::uint64_t seed) {
  budget.validate();
  const auto& vocab = world.vocabulary();
  Trajectory traj;
  traj.qa_id = item.id;
  std::mt19937_64 rng(seed);
  Rollout roll(policy, traj);
  GrammarState grammar;

  const auto prompt = world::encode_prompt(vocab, item.question);
  if (prompt.size() >= budget.max_total_length) {
    throw std::invalid_argument("run_episode: prompt longer than max_total_length");
  }
  roll.inject(prompt);
  traj.prompt_length = prompt.size();

  if (options.golden_context) {
    world::RetrievalResult gold;
    for (int id : item.supporting_docs()) gold.hits.push_back({id, 0.0});
    const auto block = information_block(vocab, world::format_information(gold, world.corpus()));
    if (traj.tokens.size() + block.size() > budget.max_total_length) {
      throw std::invalid_argument("run_episode: golden context exceeds max_total_length");
    }
    for (int t : block) grammar.feed(t, true);
    roll.inject(block);
  }

  std::size_t searches = 0;
  std::size_t segment_tokens = 0;
  int forced = options.forced_first_token.value_or(-1);
  FinishReason finish = FinishReason::kEos;
  for (;;) {
    if (traj.tokens.size() >= budget.max_total_length) {
      finish = FinishReason::kLengthLimit;
      break;
    }
    if (segment_tokens >= budget.max_turn_tokens) {
      finish = FinishReason::kTokenLimit;
      break;
    }
    const int tok = roll.generate(options.temperature, rng, forced);
    forced = -1;
    ++segment_tokens;
    const auto verdict = grammar.feed(tok);
    if (verdict == GrammarState::Verdict::kMalformed) {
      finish = FinishReason::kMalformed;
      break;
    }
    if (verdict == GrammarState::Verdict::kEos) {
      finish = FinishReason::kEos;
      break;
    }
    if (verdict == GrammarState::Verdict::kClosedAnswer) {
      finish = FinishReason::kAnswer;
      break;
    }
    if (verdict == GrammarState::Verdict::kClosedSearch) {
      std::size_t open = traj.tokens.size() - 1;
      while (traj.tokens[open] != Vocabulary::open_tag(Tag::kSearch)) --open;
      const auto query_ids = std::span<const int>(traj.tokens).subspan(open + 1, traj.tokens.size() - open - 2);
      const std::string query = world::collapse_whitespace(vocab.decode(query_ids));
      traj.search_queries.push_back(query);
      if (options.stop_at_first_search) {
        finish = FinishReason::kStopped;
        break;
      }
      if (searches == budget.max_turns) {
        finish = FinishReason::kTurnLimit;
        break;
      }
      const auto block =
          information_block(vocab, world::format_information(world.retrieve(query, budget.retrieval_k),
                                                             world.corpus()));
      if (traj.tokens.size() + block.size() > budget.max_total_length) {
        finish = FinishReason::kLengthLimit;
        break;
      }
      ++searches;
      for (int t : block) grammar.feed(t, true);
      roll.inject(block);
      segment_tokens = 0;
    }
  }

  traj.finish = finish;
  traj.turn_count = std::max<std::size_t>(1, searches);
  traj.parse = parse_trajectory(traj.tokens, traj.prompt_length);
  if (finish == FinishReason::kAnswer) traj.answer = extract_answer(vocab, traj.tokens);
  return traj;
}

std::optional<std::string> extract_answer(const Vocabulary& vocab, std::span<const int> tokens) {
  const auto parse = parse_trajectory(tokens);
  const auto spans = parse.spans_of(SpanKind::kAnswer);
  if (spans.empty()) return std::nullopt;
  return span_text(vocab, tokens, spans.front());
}

std::optional<std::string> extract_answer(const Trajectory& traj) { return traj.answer; }

std::optional<std::string> first_search_query(const Vocabulary& vocab, std::span<const int> tokens) {
  const auto spans = parse_trajectory(tokens).spans_of(SpanKind::kSearch);
  if (spans.empty()) return std::nullopt;
  return span_text(vocab, tokens, spans.front());
}

std::optional<std::string> first_search_query(const Trajectory& traj) {
  if (traj.search_queries.empty()) return std::nullopt;
  return traj.search_queries.front();
}

std::size_t count_search_steps(std::span<const int> tokens) {
  return parse_trajectory(tokens).spans_of(SpanKind::kSearch).size();
}

std::size_t count_search_steps(const Trajectory& traj) {
  return traj.parse.spans_of(SpanKind::kSearch).size();
}

std::vector<std::pair<int, std::size_t>> mask_runs(std::span<const std::uint8_t> mask) {
  std::vector<std::pair<int, std::size_t>> runs;
  for (auto m : mask) {
    if (!runs.empty() && runs.back().first == m) {
      ++runs.back().second;
    } else {
      runs.emplace_back(m, 1);
    }
  }
  return runs;
}

void write_trajectory_log(std::ostream& out, const Trajectory& traj, const world::World& world) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& [bit, len] : mask_runs(traj.mask)) runs.push_back({bit, len});
  const world::QAItem* item = nullptr;
  for (const auto* set : {&world.train(), &world.test()})
    for (const auto& q : *set)
      if (q.id == traj.qa_id) item = &q;
  nlohmann::json j = {{"v", 1},
                      {"qa_id", traj.qa_id},
                      {"question", item ? item->question : ""},
                      {"gold", item ? item->answer : ""},
                      {"text", world.vocabulary().decode(traj.tokens)},
                      {"mask_runs", runs},
                      {"reward", traj.reward},
                      {"answer", traj.answer ? nlohmann::json(*traj.answer) : nlohmann::json(nullptr)},
                      {"searches", traj.search_queries},
                      {"turns", traj.turn_count},
                      {"finish", finish_reason_name(traj.finish)},
                      {"well_formed", traj.parse.well_formed}};
  out << j.dump() << '\n';
}

}  // namespace dgpo::episode
