#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dgpo/langmodel/vocabulary.hpp"
#include "dgpo/world/retriever.hpp"

namespace dgpo::world {

enum class EntityType { kPerson, kWork, kClub, kCity };

std::string_view entity_type_name(EntityType t);

struct RelationSchema {
  std::string name;
  EntityType subject = EntityType::kPerson;
  EntityType object = EntityType::kPerson;
  bool functional = true;
};

// The four relations the generator knows how to render and ask about.
std::vector<RelationSchema> default_relations();

class WorldSpecError : public std::invalid_argument {
 public:
  WorldSpecError(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WorldSpec {
  std::uint64_t seed = 1;
  std::size_t entity_count = 200;
  std::vector<RelationSchema> relations = default_relations();
  // Fraction of chain-capable subjects that receive two-hop questions.
  double multi_hop_fraction = 0.5;
  // Decoy documents per subject entity; decoys repeat the question phrasing
  // without the relation keyword or the answer.
  std::size_t distractor_density = 3;
  double test_fraction = 0.2;

  void validate() const;
};

struct Entity {
  int id = 0;
  EntityType type = EntityType::kPerson;
  std::string name;
};

struct Fact {
  int subject = 0;
  std::string relation;
  int object = 0;
};

struct Hop {
  std::string subject;
  std::string relation;
  std::string object;
  int doc_id = 0;
  std::string query;  // oracle search query for this hop

  bool operator==(const Hop&) const = default;
};

struct QAItem {
  int id = 0;
  std::string question;
  std::string answer;
  std::vector<Hop> hops;

  std::size_t hop_count() const { return hops.size(); }
  std::vector<int> supporting_docs() const;
  std::vector<std::string> oracle_queries() const;
  bool operator==(const QAItem&) const = default;
};

// Closed lexicon the world is rendered in (excludes special and tag tokens).
std::vector<std::string> lexicon();
langmodel::Vocabulary make_vocabulary();

// Sentence asserting one fact, exactly as it appears in document bodies.
std::string fact_sentence(std::string_view relation, std::string_view subject,
                          std::string_view object);
std::string question_text(std::string_view relation, std::string_view subject_phrase);
std::string oracle_query(std::string_view subject, std::string_view relation);

class World {
 public:
  World(WorldSpec spec, Corpus corpus, std::vector<QAItem> train, std::vector<QAItem> test);

  const WorldSpec& spec() const { return spec_; }
  const Corpus& corpus() const { return corpus_; }
  const Retriever& retriever() const { return retriever_; }
  const std::vector<QAItem>& train() const { return train_; }
  const std::vector<QAItem>& test() const { return test_; }
  const langmodel::Vocabulary& vocabulary() const { return vocab_; }

  const QAItem* find_question(std::string_view question) const;
  RetrievalResult retrieve(std::string_view query, std::size_t k) const {
    return retriever_.retrieve(query, k);
  }
  // Digest over corpus and both QA splits.
  std::string digest() const;

 private:
  WorldSpec spec_;
  Corpus corpus_;
  Retriever retriever_;
  std::vector<QAItem> train_;
  std::vector<QAItem> test_;
  langmodel::Vocabulary vocab_;
  std::unordered_map<std::string, const QAItem*> by_question_;
};

// Pure function of the spec. Throws WorldSpecError for invalid specs and
// GenerationError if a construction guarantee cannot be met.
World generate_world(const WorldSpec& spec);

// Fraction of one-hop items whose top-k retrieval for `query_of(item)`
// contains a document with the gold answer.
double one_hop_hit_ratio(const World& world, const std::vector<QAItem>& items, std::size_t k,
                         const std::function<std::string(const QAItem&)>& query_of);

}  // namespace dgpo::world
