#include "dgpo/world/corpus_io.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

namespace dgpo::world {

using nlohmann::json;

CorpusFormatError::CorpusFormatError(const std::string& path, std::size_t line, std::size_t offset,
                                     const std::string& message)
    : std::runtime_error(path + ":" + std::to_string(line) + " (byte " + std::to_string(offset) +
                         "): " + message),
      line_(line),
      offset_(offset) {}

namespace {

void write_lines(const std::filesystem::path& path, const std::string& kind,
                 const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << json{{"v", kCorpusSchemaVersion}, {"kind", kind}, {"count", records.size()}}.dump() << '\n';
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Parses header and records, handing each record to `consume`, which throws
// on missing or mistyped fields.
void read_lines(const std::filesystem::path& path, const std::string& kind,
                const std::function<void(const json&)>& consume) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  const std::string name = path.string();

  std::size_t pos = 0, line_no = 0;
  std::size_t expected = 0, seen = 0;
  while (pos < data.size()) {
    const std::size_t line_start = pos;
    ++line_no;
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      throw CorpusFormatError(name, line_no, line_start, "truncated record (no line terminator)");
    }
    const std::string_view line(data.data() + pos, nl - pos);
    pos = nl + 1;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw CorpusFormatError(name, line_no, line_start, std::string("malformed record: ") + e.what());
    }
    try {
      if (j.at("v").get<int>() != kCorpusSchemaVersion) {
        throw CorpusFormatError(name, line_no, line_start,
                                "unsupported schema version " + j.at("v").dump());
      }
      if (line_no == 1) {
        if (j.at("kind").get<std::string>() != kind) {
          throw CorpusFormatError(name, line_no, line_start, "expected kind '" + kind + "'");
        }
        expected = j.at("count").get<std::size_t>();
        continue;
      }
      consume(j);
      ++seen;
    } catch (const CorpusFormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw CorpusFormatError(name, line_no, line_start, std::string("bad record: ") + e.what());
    }
  }
  if (line_no == 0) throw CorpusFormatError(name, 1, 0, "empty file");
  if (seen != expected) {
    throw CorpusFormatError(name, line_no + 1, data.size(),
                            "expected " + std::to_string(expected) + " records, found " +
                                std::to_string(seen));
  }
}

json hop_to_json(const Hop& h) {
  return {{"subject", h.subject}, {"relation", h.relation}, {"object", h.object},
          {"doc", h.doc_id},      {"query", h.query}};
}

Hop hop_from_json(const json& j) {
  return {j.at("subject").get<std::string>(), j.at("relation").get<std::string>(),
          j.at("object").get<std::string>(), j.at("doc").get<int>(), j.at("query").get<std::string>()};
}

}  // namespace

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<json> records;
  for (const auto& d : corpus.documents()) {
    records.push_back({{"v", kCorpusSchemaVersion}, {"id", d.id}, {"title", d.title}, {"body", d.body}});
  }
  write_lines(path, "corpus", records);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  read_lines(path, "corpus", [&](const json& j) {
    docs.push_back({j.at("id").get<int>(), j.at("title").get<std::string>(),
                    j.at("body").get<std::string>()});
  });
  try {
    return Corpus(std::move(docs));
  } catch (const std::invalid_argument& e) {
    throw CorpusFormatError(path.string(), 0, 0, e.what());
  }
}

void save_qa(const std::filesystem::path& path, const std::vector<QAItem>& items) {
  std::vector<json> records;
  for (const auto& q : items) {
    json hops = json::array();
    for (const auto& h : q.hops) hops.push_back(hop_to_json(h));
    records.push_back({{"v", kCorpusSchemaVersion},
                       {"id", q.id},
                       {"question", q.question},
                       {"answer", q.answer},
                       {"hops", hops}});
  }
  write_lines(path, "qa", records);
}

std::vector<QAItem> load_qa(const std::filesystem::path& path) {
  std::vector<QAItem> items;
  read_lines(path, "qa", [&](const json& j) {
    QAItem q{j.at("id").get<int>(), j.at("question").get<std::string>(),
             j.at("answer").get<std::string>(), {}};
    for (const auto& h : j.at("hops")) q.hops.push_back(hop_from_json(h));
    if (q.hops.empty()) throw std::invalid_argument("item has no hops");
    items.push_back(std::move(q));
  });
  return items;
}

void save_world(const std::filesystem::path& dir, const World& world) {
  std::filesystem::create_directories(dir);
  save_corpus(dir / "corpus.jsonl", world.corpus());
  save_qa(dir / "train.jsonl", world.train());
  save_qa(dir / "test.jsonl", world.test());
}

World load_world(const std::filesystem::path& dir, const WorldSpec& spec) {
  return World(spec, load_corpus(dir / "corpus.jsonl"), load_qa(dir / "train.jsonl"),
               load_qa(dir / "test.jsonl"));
}

}  // namespace dgpo::world
