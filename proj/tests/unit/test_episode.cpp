#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/model.hpp"
#include "dgpo/world/protocol.hpp"
#include "dgpo/world/teacher.hpp"
#include "support/scripted_policy.hpp"

using namespace dgpo::episode;
using dgpo::langmodel::Tag;
using dgpo::langmodel::Vocabulary;
using dgpo::world::QAItem;
using dgpo::world::World;

namespace {

const World& world() {
  static const World w = dgpo::world::generate_world(dgpo::world::WorldSpec{});
  return w;
}

const QAItem& first_with_hops(std::size_t hops) {
  for (const auto& q : world().test())
    if (q.hop_count() == hops) return q;
  throw std::runtime_error("no item");
}

constexpr int kThink = Vocabulary::open_tag(Tag::kThink);
constexpr int kThinkEnd = Vocabulary::close_tag(Tag::kThink);
constexpr int kSearch = Vocabulary::open_tag(Tag::kSearch);
constexpr int kSearchEnd = Vocabulary::close_tag(Tag::kSearch);
constexpr int kInfo = Vocabulary::open_tag(Tag::kInformation);
constexpr int kInfoEnd = Vocabulary::close_tag(Tag::kInformation);
constexpr int kAnswer = Vocabulary::open_tag(Tag::kAnswer);
constexpr int kAnswerEnd = Vocabulary::close_tag(Tag::kAnswer);

// Vocabulary with the capitalised words of the worked example.
const Vocabulary& table_vocab() {
  static const Vocabulary v({"Whose", "album", "was", "Red", "?", "artist", "Taylor", "Swift", "is",
                             "the", "of", "Doc", "1", "(", ")", "Title", ":", "\"", ".", "x"});
  return v;
}

std::vector<int> cat(std::initializer_list<std::vector<int>> parts) {
  std::vector<int> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<int> worked_example() {
  const auto& v = table_vocab();
  return cat({{Vocabulary::kBos},
              v.encode("Whose album was Red ?"),
              {kThink},
              v.encode("x"),
              {kThinkEnd, kSearch},
              v.encode("Red album artist"),
              {kSearchEnd, kInfo},
              v.encode("Doc 1(Title: \"Red\") the artist of Red is Taylor Swift ."),
              {kInfoEnd, kThink},
              v.encode("x"),
              {kThinkEnd, kAnswer},
              v.encode("Taylor Swift"),
              {kAnswerEnd, Vocabulary::kEos}});
}

EpisodeOptions greedy() {
  EpisodeOptions o;
  o.temperature = 0.0;
  return o;
}

}  // namespace

TEST_CASE("parse of a well formed episode gives exact spans") {
  const auto t = worked_example();
  const auto p = parse_trajectory(t);
  CHECK(p.well_formed);
  const std::vector<SpanKind> kinds = {SpanKind::kPrompt, SpanKind::kThink,  SpanKind::kSearch,
                                       SpanKind::kInformation, SpanKind::kThink, SpanKind::kAnswer,
                                       SpanKind::kEos};
  REQUIRE(p.spans.size() == kinds.size());
  for (std::size_t i = 0; i < kinds.size(); ++i) CHECK(p.spans[i].kind == kinds[i]);
  CHECK(p.spans[0] == Span{SpanKind::kPrompt, 0, 6});
  CHECK(p.spans[1] == Span{SpanKind::kThink, 6, 9});
  CHECK(p.spans[2] == Span{SpanKind::kSearch, 9, 14});
  std::size_t covered = 0;
  for (const auto& s : p.spans) {
    CHECK(s.begin == covered);
    covered = s.end;
  }
  CHECK(covered == t.size());
}

TEST_CASE("parse diagnostics") {
  const auto& v = table_vocab();
  SUBCASE("unclosed search") {
    const auto t = cat({{Vocabulary::kBos}, v.encode("x"), {kThink, kThinkEnd, kSearch}, v.encode("Red")});
    const auto p = parse_trajectory(t);
    CHECK_FALSE(p.well_formed);
    CHECK(p.error_position == t.size());
    CHECK(p.spans.size() == 2);
    CHECK(p.spans.back().kind == SpanKind::kThink);
  }
  SUBCASE("nested think and search") {
    const auto t = cat({{Vocabulary::kBos}, v.encode("x"), {kThink}, v.encode("x x"), {kSearch}});
    const auto p = parse_trajectory(t);
    CHECK_FALSE(p.well_formed);
    CHECK(p.error_position == 5);
    CHECK(p.diagnostic.find("not closed") != std::string::npos);
  }
  SUBCASE("search must be followed by information") {
    const auto t = cat({{Vocabulary::kBos, kSearch}, v.encode("x"), {kSearchEnd, kThink}});
    CHECK(parse_trajectory(t).error_position == 4);
  }
  SUBCASE("stray words between blocks") {
    const auto t = cat({{Vocabulary::kBos, kThink, kThinkEnd}, v.encode("x")});
    CHECK(parse_trajectory(t).error_position == 3);
  }
}

TEST_CASE("literal extraction helpers") {
  const auto& v = table_vocab();
  const auto t = worked_example();
  CHECK(extract_answer(v, t) == std::optional<std::string>("Taylor Swift"));
  CHECK(first_search_query(v, t) == std::optional<std::string>("Red album artist"));
  CHECK(count_search_steps(t) == 1);

  const auto none = cat({{Vocabulary::kBos}, v.encode("x"), {kThink, kThinkEnd, Vocabulary::kEos}});
  CHECK_FALSE(extract_answer(v, none).has_value());
  CHECK_FALSE(first_search_query(v, none).has_value());
  CHECK(count_search_steps(none) == 0);

  const auto two = cat({{Vocabulary::kBos, kAnswer}, v.encode("Taylor"), {kAnswerEnd, kAnswer},
                        v.encode("Swift"), {kAnswerEnd}});
  CHECK(extract_answer(v, two) == std::optional<std::string>("Taylor"));

  std::vector<int> three{Vocabulary::kBos};
  for (int i = 0; i < 3; ++i) {
    three = cat({three, {kSearch}, v.encode("Red"), {kSearchEnd, kInfo}, v.encode("x"), {kInfoEnd}});
  }
  CHECK(count_search_steps(three) == 3);
}

TEST_CASE("oracle teacher episode on a one hop item") {
  const auto& item = first_with_hops(1);
  dgpo::world::OracleTeacher teacher(world());
  const auto traj = run_episode(teacher, world(), item, EpisodeBudget{}, greedy(), 1);
  CHECK(traj.finish == FinishReason::kAnswer);
  CHECK(traj.answer == std::optional<std::string>(item.answer));
  CHECK(traj.parse.well_formed);
  std::vector<SpanKind> kinds;
  for (const auto& s : traj.parse.spans) kinds.push_back(s.kind);
  CHECK(kinds == std::vector<SpanKind>{SpanKind::kPrompt, SpanKind::kThink, SpanKind::kSearch,
                                       SpanKind::kInformation, SpanKind::kThink, SpanKind::kAnswer});
  CHECK(traj.search_queries == std::vector<std::string>{item.hops[0].query});
  CHECK(traj.turn_count == 1);

  // Masks: zero on prompt and information, one elsewhere.
  for (const auto& s : traj.parse.spans) {
    const int want = (s.kind == SpanKind::kPrompt || s.kind == SpanKind::kInformation) ? 0 : 1;
    for (std::size_t i = s.begin; i < s.end; ++i) CHECK(traj.mask[i] == want);
  }
  // Injected text is exactly the formatted retrieval output.
  const auto info = traj.parse.spans_of(SpanKind::kInformation).front();
  const auto& vocab = world().vocabulary();
  const auto expected = dgpo::world::format_information(world().retrieve(item.hops[0].query, 3), world().corpus());
  CHECK(std::vector<int>(traj.tokens.begin() + static_cast<long>(info.begin) + 1,
                         traj.tokens.begin() + static_cast<long>(info.end) - 1) == vocab.encode(expected));
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj.mask[i]) CHECK(traj.old_logprobs[i] == doctest::Approx(std::log(0.95)).epsilon(1e-12));
    else CHECK(traj.old_logprobs[i] == 0.0);
  }
}

TEST_CASE("answering immediately uses one turn and no search") {
  const auto& item = first_with_hops(1);
  const auto& vocab = world().vocabulary();
  const auto script = cat({{kAnswer}, vocab.encode("nora quinn"), {kAnswerEnd}});
  const auto policy = dgpo::testing::script_policy(vocab.size(), script);
  const auto traj = run_episode(policy, world(), item, EpisodeBudget{}, greedy(), 3);
  CHECK(traj.finish == FinishReason::kAnswer);
  CHECK(traj.search_queries.empty());
  CHECK(traj.turn_count == 1);
  CHECK(traj.answer == std::optional<std::string>("nora quinn"));
}

TEST_CASE("turn budget truncates a two hop episode after the first retrieval") {
  const auto& item = first_with_hops(2);
  dgpo::world::OracleTeacher teacher(world());
  EpisodeBudget b;
  b.max_turns = 1;
  const auto traj = run_episode(teacher, world(), item, b, greedy(), 1);
  CHECK(traj.finish == FinishReason::kTurnLimit);
  CHECK_FALSE(traj.answer.has_value());
  CHECK(traj.parse.spans_of(SpanKind::kInformation).size() == 1);
  CHECK(traj.turn_count <= b.max_turns);

  b.max_turns = 2;
  const auto full = run_episode(teacher, world(), item, b, greedy(), 1);
  CHECK(full.answer == std::optional<std::string>(item.answer));
  CHECK(full.turn_count == 2);
}

TEST_CASE("malformed generations end the episode without an answer") {
  const auto& item = first_with_hops(1);
  const auto& vocab = world().vocabulary();
  SUBCASE("policy opens information") {
    const auto policy = dgpo::testing::script_policy(vocab.size(), {kInfo});
    const auto traj = run_episode(policy, world(), item, EpisodeBudget{}, greedy(), 1);
    CHECK(traj.finish == FinishReason::kMalformed);
    CHECK_FALSE(traj.answer.has_value());
    CHECK(traj.mask.back() == 1);
  }
  SUBCASE("nested tags") {
    const auto policy = dgpo::testing::script_policy(vocab.size(), {kThink, kAnswer});
    const auto traj = run_episode(policy, world(), item, EpisodeBudget{}, greedy(), 1);
    CHECK(traj.finish == FinishReason::kMalformed);
  }
  SUBCASE("token budget") {
    std::vector<int> script{kThink};
    for (int i = 0; i < 20; ++i) script.push_back(vocab.id("the"));
    const auto policy = dgpo::testing::script_policy(vocab.size(), script);
    EpisodeBudget b;
    b.max_turn_tokens = 10;
    const auto traj = run_episode(policy, world(), item, b, greedy(), 1);
    CHECK(traj.finish == FinishReason::kTokenLimit);
    CHECK(traj.generated_count() == 10);
  }
}

TEST_CASE("teacher solves every test item") {
  dgpo::world::OracleTeacher teacher(world());
  for (std::size_t k : {1, 3}) {
    EpisodeBudget b;
    b.retrieval_k = k;
    for (const auto& item : world().test()) {
      b.max_turns = item.hop_count();
      const auto traj = run_episode(teacher, world(), item, b, greedy(), 7);
      CHECK(traj.answer == std::optional<std::string>(item.answer));
      CHECK(count_search_steps(traj) == item.hop_count());
    }
  }
}

TEST_CASE("sampled model episodes are reproducible and bounded") {
  dgpo::langmodel::ModelConfig cfg;
  cfg.vocab_size = world().vocabulary().size();
  cfg.layers = 1;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.context = 160;
  const dgpo::langmodel::PolicyModel model(cfg, 5);
  const dgpo::langmodel::ModelPolicy policy(model);
  EpisodeBudget b;
  b.max_total_length = 160;
  EpisodeOptions o;
  const auto& item = first_with_hops(2);
  const auto a = run_episode(policy, world(), item, b, o, 11);
  const auto c = run_episode(policy, world(), item, b, o, 11);
  CHECK(a.tokens == c.tokens);
  CHECK(a.old_logprobs == c.old_logprobs);
  CHECK(a.values == c.values);
  CHECK(a.size() <= b.max_total_length);
  CHECK(a.mask.size() == a.size());

  std::ostringstream log;
  write_trajectory_log(log, a, world());
  const auto j = nlohmann::json::parse(log.str());
  CHECK(j.at("question") == item.question);
  std::size_t total = 0;
  for (const auto& r : j.at("mask_runs")) total += r.at(1).get<std::size_t>();
  CHECK(total == a.size());
}

TEST_CASE("forced first token and golden context") {
  const auto& item = first_with_hops(2);
  dgpo::world::OracleTeacher teacher(world());
  EpisodeOptions o = greedy();
  o.golden_context = true;
  o.forced_first_token = kAnswer;
  const auto traj = run_episode(teacher, world(), item, EpisodeBudget{}, o, 1);
  CHECK(traj.answer == std::optional<std::string>(item.answer));
  CHECK(traj.search_queries.empty());
  CHECK(traj.tokens[traj.prompt_length] == kInfo);
}
