#include "dgpo/world/retriever.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "dgpo/langmodel/vocabulary.hpp"

namespace dgpo::world {

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (docs_[i].id != static_cast<int>(i)) {
      throw std::invalid_argument("Corpus: document at position " + std::to_string(i) + " has id " +
                                  std::to_string(docs_[i].id));
    }
  }
}

std::vector<std::string> index_terms(std::string_view text) {
  std::vector<std::string> terms;
  for (auto& tok : langmodel::split_tokens(text)) {
    if (langmodel::Vocabulary::is_punctuation(tok)) continue;
    if (tok.size() > 1 && tok.front() == '<' && tok.back() == '>') continue;
    for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    terms.push_back(std::move(tok));
  }
  return terms;
}

Retriever::Retriever(const Corpus& corpus) : doc_count_(corpus.size()) {
  for (const auto& d : corpus.documents()) {
    std::map<std::string, int> tf;
    for (auto& t : index_terms(d.title + " " + d.body)) ++tf[t];
    for (auto& [term, count] : tf) postings_[term].push_back({d.id, count});
  }
}

double Retriever::idf(const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return 0.0;
  return std::log(static_cast<double>(doc_count_) / static_cast<double>(it->second.size()));
}

RetrievalResult Retriever::retrieve(std::string_view query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("retrieve: k must be >= 1");
  RetrievalResult result;
  auto terms = index_terms(query);
  if (terms.empty()) return result;
  std::set<std::string> distinct(terms.begin(), terms.end());
  std::vector<double> scores(doc_count_, 0.0);
  // Accumulate in sorted term order so scores do not depend on hash order.
  for (const auto& t : distinct) {
    auto it = postings_.find(t);
    if (it == postings_.end()) continue;
    const double w = idf(t);
    for (const auto& p : it->second) {
      scores[static_cast<std::size_t>(p.doc_id)] += (1.0 + std::log(static_cast<double>(p.tf))) * w;
    }
  }
  std::vector<int> order(doc_count_);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  const std::size_t n = std::min(k, doc_count_);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](int a, int b) {
                      const double sa = scores[static_cast<std::size_t>(a)];
                      const double sb = scores[static_cast<std::size_t>(b)];
                      return sa != sb ? sa > sb : a < b;
                    });
  for (std::size_t i = 0; i < n; ++i) result.hits.push_back({order[i], scores[static_cast<std::size_t>(order[i])]});
  return result;
}

std::string format_information(const RetrievalResult& result, const Corpus& corpus) {
  std::string out;
  for (std::size_t i = 0; i < result.hits.size(); ++i) {
    const auto& d = corpus.doc(result.hits[i].doc_id);
    if (i) out.push_back(' ');
    out += "Doc " + std::to_string(i + 1) + "(Title: \"" + d.title + "\") " + d.body;
  }
  return out;
}

}  // namespace dgpo::world
