#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dgpo::world {

struct Document {
  int id = 0;
  std::string title;
  std::string body;

  bool operator==(const Document&) const = default;
};

class Corpus {
 public:
  Corpus() = default;
  // Documents must carry ids 0..n-1 in order.
  explicit Corpus(std::vector<Document> docs);

  const std::vector<Document>& documents() const { return docs_; }
  const Document& doc(int id) const { return docs_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return docs_.size(); }

 private:
  std::vector<Document> docs_;
};

struct ScoredDoc {
  int doc_id = 0;
  double score = 0.0;
};

// Ranked list, scores non-increasing, ties broken by lower document id.
struct RetrievalResult {
  std::vector<ScoredDoc> hits;
};

// Lower-cased word terms of a text; punctuation and tag tokens dropped.
std::vector<std::string> index_terms(std::string_view text);

// Lexical TF-IDF retriever over title + body:
//   score(q, d) = sum over distinct query terms t with df(t) > 0 of
//                 (1 + ln tf(t, d)) * ln(N / df(t))   when tf(t, d) > 0.
class Retriever {
 public:
  explicit Retriever(const Corpus& corpus);

  // Top-k documents; every document is eligible, so k >= N returns all of
  // them. An empty query yields an empty result.
  RetrievalResult retrieve(std::string_view query, std::size_t k) const;
  double idf(const std::string& term) const;

 private:
  struct Posting {
    int doc_id;
    int tf;
  };
  std::size_t doc_count_ = 0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

// Renders a retrieval result as the text injected between the information
// tags: `Doc 1(Title: "...") body Doc 2(Title: "...") body ...`.
std::string format_information(const RetrievalResult& result, const Corpus& corpus);

}  // namespace dgpo::world
