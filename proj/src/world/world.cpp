#include "dgpo/world/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>

#include "dgpo/util/hashing.hpp"
#include "dgpo/world/text.hpp"

namespace dgpo::world {

namespace {

constexpr std::array<std::string_view, 16> kFirstNames = {
    "adam", "bella", "carl", "dina", "emil", "fiona", "gus", "hana",
    "ivan", "julia", "karl", "lena", "milo", "nora", "oscar", "petra"};
constexpr std::array<std::string_view, 16> kLastNames = {
    "abbott", "baker", "carter", "dalton", "ellis", "foster", "grant", "hayes",
    "irwin", "jensen", "keller", "lowe", "mercer", "nolan", "porter", "quinn"};
constexpr std::array<std::string_view, 16> kAdjectives = {
    "red", "blue", "green", "silver", "golden", "quiet", "wild", "broken",
    "hidden", "lonely", "bright", "dark", "frozen", "burning", "gentle", "ancient"};
constexpr std::array<std::string_view, 16> kWorkNouns = {
    "album", "novel", "opera", "ballad", "symphony", "saga", "anthem", "sonata",
    "chronicle", "fable", "hymn", "requiem", "legend", "memoir", "overture", "epic"};
constexpr std::array<std::string_view, 16> kClubNouns = {
    "lions", "wolves", "falcons", "rovers", "rangers", "tigers", "eagles", "bears",
    "sharks", "hawks", "giants", "pilots", "knights", "comets", "owls", "foxes"};
constexpr std::array<std::string_view, 8> kCityStems = {"ash", "bel", "cor", "dun",
                                                        "el",  "fen", "gal", "har"};
constexpr std::array<std::string_view, 8> kCitySuffixes = {"ford", "mere", "ton",  "wick",
                                                           "by",   "holm", "stead", "vale"};
constexpr std::array<std::string_view, 6> kGenres = {"song", "film", "poem",
                                                     "game", "ship", "painting"};
constexpr std::array<std::string_view, 35> kFunctionWords = {
    "the", "writer", "of", "is", "birthplace", "affiliation", "headquarters", "who", "wrote",
    "where", "was", "born", "which", "club", "did", "join", "based", "people", "ask",
    "find", "answer", "given", "question", "think", "first", "search", "if", "needed",
    "then", "Doc", "Title", "(", ")", ":", "\""};
constexpr std::array<std::string_view, 3> kSentencePunct = {".", ",", "?"};
constexpr int kMaxDocNumber = 16;
constexpr std::size_t kCheckTopK = 3;
constexpr std::size_t kMaxEntities = 320;

std::vector<std::string> city_names() {
  std::vector<std::string> out;
  for (auto stem : kCityStems)
    for (auto suffix : kCitySuffixes) out.push_back(std::string(stem) + std::string(suffix));
  return out;
}

template <std::size_t A, std::size_t B>
std::vector<std::string> pair_names(const std::array<std::string_view, A>& left,
                                    const std::array<std::string_view, B>& right) {
  std::vector<std::string> out;
  for (auto l : left)
    for (auto r : right) out.push_back(std::string(l) + " " + std::string(r));
  return out;
}

std::uint64_t below(std::mt19937_64& rng, std::size_t n) { return rng() % n; }

template <class T>
void shuffle_in_place(std::vector<T>& xs, std::mt19937_64& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[below(rng, i)]);
}

struct EntityCounts {
  std::size_t person, work, club, city;
};

EntityCounts split_counts(std::size_t n) {
  EntityCounts c{};
  c.person = static_cast<std::size_t>(std::llround(0.35 * static_cast<double>(n)));
  c.work = static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(n)));
  c.club = static_cast<std::size_t>(std::llround(0.20 * static_cast<double>(n)));
  c.city = n - c.person - c.work - c.club;
  return c;
}

const RelationSchema* find_relation(const std::vector<RelationSchema>& rels, std::string_view name) {
  for (const auto& r : rels)
    if (r.name == name) return &r;
  return nullptr;
}

}  // namespace

std::string_view entity_type_name(EntityType t) {
  switch (t) {
    case EntityType::kPerson: return "person";
    case EntityType::kWork: return "work";
    case EntityType::kClub: return "club";
    case EntityType::kCity: return "city";
  }
  return "?";
}

std::vector<RelationSchema> default_relations() {
  return {{"writer", EntityType::kWork, EntityType::kPerson, true},
          {"birthplace", EntityType::kPerson, EntityType::kCity, true},
          {"affiliation", EntityType::kPerson, EntityType::kClub, true},
          {"headquarters", EntityType::kClub, EntityType::kCity, true}};
}

void WorldSpec::validate() const {
  if (entity_count < 10 || entity_count > kMaxEntities) {
    throw WorldSpecError("entity_count", "must be in [10, " + std::to_string(kMaxEntities) + "]");
  }
  if (relations.empty()) throw WorldSpecError("relations", "at least one relation required");
  const auto known = default_relations();
  std::set<std::string> seen;
  for (const auto& r : relations) {
    const auto* k = find_relation(known, r.name);
    if (!k) throw WorldSpecError("relations", "unknown relation '" + r.name + "'");
    if (!seen.insert(r.name).second)
      throw WorldSpecError("relations", "duplicate relation '" + r.name + "'");
    if (r.subject != k->subject || r.object != k->object)
      throw WorldSpecError("relations", "relation '" + r.name + "' has the wrong argument types");
    if (!r.functional)
      throw WorldSpecError("relations",
                           "relation '" + r.name + "' is not functional and admits contradictions");
  }
  if (!(multi_hop_fraction > 0.0 && multi_hop_fraction <= 1.0))
    throw WorldSpecError("multi_hop_fraction", "must be in (0, 1]");
  if (distractor_density > kGenres.size())
    throw WorldSpecError("distractor_density",
                         "must be at most " + std::to_string(kGenres.size()));
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw WorldSpecError("test_fraction", "must be in (0, 1)");
}

std::vector<int> QAItem::supporting_docs() const {
  std::vector<int> out;
  for (const auto& h : hops) out.push_back(h.doc_id);
  return out;
}

std::vector<std::string> QAItem::oracle_queries() const {
  std::vector<std::string> out;
  for (const auto& h : hops) out.push_back(h.query);
  return out;
}

std::vector<std::string> lexicon() {
  std::vector<std::string> words;
  for (auto w : kFunctionWords) words.emplace_back(w);
  for (auto w : kSentencePunct) words.emplace_back(w);
  for (int i = 1; i <= kMaxDocNumber; ++i) words.push_back(std::to_string(i));
  for (auto w : kFirstNames) words.emplace_back(w);
  for (auto w : kLastNames) words.emplace_back(w);
  for (auto w : kAdjectives) words.emplace_back(w);
  for (auto w : kWorkNouns) words.emplace_back(w);
  for (auto w : kClubNouns) words.emplace_back(w);
  for (auto& w : city_names()) words.push_back(w);
  for (auto w : kGenres) words.emplace_back(w);
  return words;
}

langmodel::Vocabulary make_vocabulary() { return langmodel::Vocabulary(lexicon()); }

std::string fact_sentence(std::string_view relation, std::string_view subject,
                          std::string_view object) {
  return "the " + std::string(relation) + " of " + std::string(subject) + " is " +
         std::string(object) + " .";
}

std::string question_text(std::string_view relation, std::string_view subject_phrase) {
  const std::string s(subject_phrase);
  if (relation == "writer") return "who wrote " + s + " ?";
  if (relation == "birthplace") return "where was " + s + " born ?";
  if (relation == "affiliation") return "which club did " + s + " join ?";
  if (relation == "headquarters") return "where is " + s + " based ?";
  throw std::invalid_argument("question_text: unknown relation '" + std::string(relation) + "'");
}

std::string oracle_query(std::string_view subject, std::string_view relation) {
  return std::string(subject) + " " + std::string(relation);
}

namespace {

std::string token_key(std::string_view text) {
  std::string key;
  for (const auto& t : langmodel::split_tokens(text)) {
    if (!key.empty()) key.push_back(' ');
    key += t;
  }
  return key;
}

}  // namespace

World::World(WorldSpec spec, Corpus corpus, std::vector<QAItem> train, std::vector<QAItem> test)
    : spec_(std::move(spec)),
      corpus_(std::move(corpus)),
      retriever_(corpus_),
      train_(std::move(train)),
      test_(std::move(test)),
      vocab_(make_vocabulary()) {
  for (const auto* set : {&train_, &test_}) {
    for (const auto& item : *set) {
      if (!by_question_.emplace(token_key(item.question), &item).second) {
        throw GenerationError("duplicate question '" + item.question + "'");
      }
    }
  }
}

const QAItem* World::find_question(std::string_view question) const {
  auto it = by_question_.find(token_key(question));
  return it == by_question_.end() ? nullptr : it->second;
}

std::string World::digest() const {
  util::Digest d;
  for (const auto& doc : corpus_.documents()) {
    d.update_u64(static_cast<std::uint64_t>(doc.id)).update(doc.title).update("\x1f").update(doc.body).update("\x1e");
  }
  for (const auto* set : {&train_, &test_}) {
    d.update("\x1d");
    for (const auto& item : *set) {
      d.update_u64(static_cast<std::uint64_t>(item.id)).update(item.question).update("\x1f").update(item.answer);
      for (const auto& h : item.hops) {
        d.update("\x1f").update(h.subject).update("|").update(h.relation).update("|").update(h.object);
        d.update("|").update(h.query).update_u64(static_cast<std::uint64_t>(h.doc_id));
      }
      d.update("\x1e");
    }
  }
  return d.hex();
}

World generate_world(const WorldSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(util::mix_seed(spec.seed, 0x776f726c64ULL));

  const auto counts = split_counts(spec.entity_count);
  auto persons = pair_names(kFirstNames, kLastNames);
  auto works = pair_names(kAdjectives, kWorkNouns);
  auto clubs = pair_names(kAdjectives, kClubNouns);
  auto cities = city_names();
  if (counts.city > cities.size()) throw WorldSpecError("entity_count", "too many cities required");

  std::vector<Entity> entities;
  auto take = [&](std::vector<std::string>& pool, std::size_t n, EntityType type) {
    shuffle_in_place(pool, rng);
    for (std::size_t i = 0; i < n; ++i) {
      entities.push_back({static_cast<int>(entities.size()), type, pool[i]});
    }
  };
  take(persons, counts.person, EntityType::kPerson);
  take(works, counts.work, EntityType::kWork);
  take(clubs, counts.club, EntityType::kClub);
  take(cities, counts.city, EntityType::kCity);

  std::map<EntityType, std::vector<int>> by_type;
  for (const auto& e : entities) by_type[e.type].push_back(e.id);

  // Facts keyed by subject, in relation-schema order.
  std::vector<std::vector<Fact>> facts(entities.size());
  for (const auto& rel : spec.relations) {
    const auto& objects = by_type[rel.object];
    for (int s : by_type[rel.subject]) {
      facts[static_cast<std::size_t>(s)].push_back({s, rel.name, objects[below(rng, objects.size())]});
    }
  }

  auto name_of = [&](int id) -> const std::string& { return entities[static_cast<std::size_t>(id)].name; };

  // Support documents plus decoys, in a shuffled order.
  struct PendingDoc {
    std::string title, body;
    int support_for = -1;
  };
  std::vector<PendingDoc> pending;
  for (const auto& e : entities) {
    const auto& fs = facts[static_cast<std::size_t>(e.id)];
    if (fs.empty()) continue;
    PendingDoc support{e.name, "", e.id};
    std::string decoy_body;
    for (const auto& f : fs) {
      if (!support.body.empty()) support.body.push_back(' ');
      support.body += fact_sentence(f.relation, e.name, name_of(f.object));
      if (!decoy_body.empty()) decoy_body.push_back(' ');
      decoy_body += "people ask " + question_text(f.relation, e.name);
    }
    pending.push_back(std::move(support));
    std::vector<std::string_view> genres(kGenres.begin(), kGenres.end());
    shuffle_in_place(genres, rng);
    for (std::size_t i = 0; i < spec.distractor_density; ++i) {
      pending.push_back({e.name + " (" + std::string(genres[i]) + ")", decoy_body, -1});
    }
  }
  shuffle_in_place(pending, rng);
  std::vector<Document> docs;
  std::vector<int> support_doc(entities.size(), -1);
  for (auto& p : pending) {
    const int id = static_cast<int>(docs.size());
    if (p.support_for >= 0) support_doc[static_cast<std::size_t>(p.support_for)] = id;
    docs.push_back({id, std::move(p.title), std::move(p.body)});
  }
  Corpus corpus(std::move(docs));

  auto make_hop = [&](const Fact& f) {
    const auto& s = name_of(f.subject);
    return Hop{s, f.relation, name_of(f.object), support_doc[static_cast<std::size_t>(f.subject)],
               oracle_query(s, f.relation)};
  };

  std::vector<QAItem> one_hop, two_hop;
  for (const auto& e : entities) {
    for (const auto& f : facts[static_cast<std::size_t>(e.id)]) {
      one_hop.push_back({0, question_text(f.relation, e.name), name_of(f.object), {make_hop(f)}});
    }
  }
  for (const auto& e : entities) {
    std::vector<std::pair<const Fact*, const Fact*>> chains;
    for (const auto& f1 : facts[static_cast<std::size_t>(e.id)]) {
      for (const auto& f2 : facts[static_cast<std::size_t>(f1.object)]) chains.emplace_back(&f1, &f2);
    }
    if (chains.empty()) continue;
    if (util::uniform01(rng) >= spec.multi_hop_fraction) continue;
    const auto [f1, f2] = chains[below(rng, chains.size())];
    const std::string phrase = "the " + f1->relation + " of " + e.name;
    QAItem item{0, question_text(f2->relation, phrase), name_of(f2->object), {make_hop(*f1), make_hop(*f2)}};
    if (contains_normalized(corpus.doc(item.hops[0].doc_id).body, item.answer)) continue;
    two_hop.push_back(std::move(item));
  }
  if (one_hop.empty() || two_hop.empty()) {
    throw GenerationError("world must contain both one-hop and two-hop questions");
  }

  std::vector<QAItem> train, test;
  for (auto* cls : {&one_hop, &two_hop}) {
    shuffle_in_place(*cls, rng);
    auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(cls->size())));
    n_test = std::clamp<std::size_t>(n_test, 1, cls->size() > 1 ? cls->size() - 1 : 1);
    for (std::size_t i = 0; i < cls->size(); ++i) {
      ((i < n_test) ? test : train).push_back((*cls)[i]);
    }
  }
  int next_id = 0;
  for (auto& it : train) it.id = next_id++;
  for (auto& it : test) it.id = next_id++;

  World world(spec, std::move(corpus), std::move(train), std::move(test));

  std::vector<QAItem> all_one_hop;
  for (const auto* set : {&world.train(), &world.test()}) {
    for (const auto& item : *set) {
      for (const auto& h : item.hops) {
        const auto r = world.retrieve(h.query, 1);
        if (r.hits.empty() || r.hits.front().doc_id != h.doc_id) {
          throw GenerationError("oracle query '" + h.query + "' does not rank its supporting document first");
        }
      }
      if (item.hop_count() == 1) all_one_hop.push_back(item);
    }
  }
  const double oracle_ratio = one_hop_hit_ratio(world, all_one_hop, kCheckTopK,
                                                [](const QAItem& q) { return q.hops[0].query; });
  const double question_ratio = one_hop_hit_ratio(world, all_one_hop, kCheckTopK,
                                                  [](const QAItem& q) { return q.question; });
  if (question_ratio > 0.7 * oracle_ratio) {
    throw GenerationError("question text retrieves too well (" + std::to_string(question_ratio) +
                          " vs oracle " + std::to_string(oracle_ratio) + ")");
  }
  return world;
}

double one_hop_hit_ratio(const World& world, const std::vector<QAItem>& items, std::size_t k,
                         const std::function<std::string(const QAItem&)>& query_of) {
  std::size_t n = 0, hits = 0;
  for (const auto& item : items) {
    if (item.hop_count() != 1) continue;
    ++n;
    for (const auto& h : world.retrieve(query_of(item), k).hits) {
      if (contains_normalized(world.corpus().doc(h.doc_id).body, item.answer)) {
        ++hits;
        break;
      }
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace dgpo::world
