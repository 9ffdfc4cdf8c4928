#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgpo/world/world.hpp"

namespace dgpo::world {

inline constexpr int kCorpusSchemaVersion = 1;

// Malformed or truncated corpus/QA file. line() is 1-based; offset() is the
// byte offset where the offending line starts (or the file size when records
// are missing at the end).
class CorpusFormatError : public std::runtime_error {
 public:
  CorpusFormatError(const std::string& path, std::size_t line, std::size_t offset,
                    const std::string& message);
  std::size_t line() const { return line_; }
  std::size_t offset() const { return offset_; }

 private:
  std::size_t line_;
  std::size_t offset_;
};

// Line-delimited JSON. The first line is a header
// {"v":1,"kind":"corpus"|"qa","count":N}; every following line is one record.
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);
void save_qa(const std::filesystem::path& path, const std::vector<QAItem>& items);
std::vector<QAItem> load_qa(const std::filesystem::path& path);

// Writes corpus.jsonl, train.jsonl and test.jsonl into `dir`.
void save_world(const std::filesystem::path& dir, const World& world);
World load_world(const std::filesystem::path& dir, const WorldSpec& spec);

}  // namespace dgpo::world
