#include "dgpo/arc/arc.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "dgpo/langmodel/vocabulary.hpp"
#include "dgpo/util/hashing.hpp"
#include "dgpo/world/text.hpp"

namespace dgpo::arc {

using langmodel::Tag;
using langmodel::Vocabulary;

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kOverall: return "overall";
    case Protocol::kSourceRef: return "source_ref";
    case Protocol::kSourceRefThink: return "source_ref_think";
    case Protocol::kQueryRewrite: return "query_rewrite";
    case Protocol::kThinkingMultihop: return "thinking_multihop";
  }
  return "unknown";
}

EvalProtocol EvalProtocol::of(Protocol mode, const episode::EpisodeBudget& budget) {
  EvalProtocol p;
  p.mode = mode;
  p.budget = budget;
  p.golden_context = mode == Protocol::kSourceRef || mode == Protocol::kSourceRefThink;
  p.forced_answer = mode == Protocol::kSourceRef;
  return p;
}

void EvalProtocol::validate() const {
  budget.validate();
  if (mode == Protocol::kSourceRef && !(golden_context && forced_answer)) {
    throw std::invalid_argument("EvalProtocol: source_ref requires golden context and a forced answer");
  }
  if (mode == Protocol::kSourceRefThink && !golden_context) {
    throw std::invalid_argument("EvalProtocol: source_ref_think requires golden context");
  }
}

namespace {

episode::EpisodeOptions greedy() {
  episode::EpisodeOptions o;
  o.temperature = 0.0;
  return o;
}

void finalize(ProtocolResult& r, bool with_steps) {
  r.count = r.items.size();
  if (r.count == 0) return;
  double s = 0.0, steps = 0.0;
  for (const auto& it : r.items) {
    s += it.score;
    steps += static_cast<double>(it.search_steps);
  }
  r.score = s / static_cast<double>(r.count);
  if (with_steps) r.mean_search_steps = steps / static_cast<double>(r.count);
}

bool has_supporting_docs(const world::World& world, const world::QAItem& item) {
  if (item.hops.empty()) return false;
  for (int id : item.supporting_docs())
    if (id < 0 || static_cast<std::size_t>(id) >= world.corpus().size()) return false;
  return true;
}

bool hit(const world::World& world, std::string_view query, std::size_t k, std::string_view gold) {
  for (const auto& h : world.retrieve(query, k).hits) {
    if (world::contains_normalized(world.corpus().doc(h.doc_id).body, gold)) return true;
  }
  return false;
}

}  // namespace

ProtocolResult eval_overall(const langmodel::Policy& policy, const world::World& world,
                            const std::vector<world::QAItem>& items,
                            const episode::EpisodeBudget& budget) {
  ProtocolResult r;
  r.mode = Protocol::kOverall;
  for (const auto& item : items) {
    const auto t = episode::run_episode(policy, world, item, budget, greedy(), 0);
    r.items.push_back({item.id, world::exact_match(t.answer, item.answer) ? 1.0 : 0.0,
                       episode::count_search_steps(t), t.answer});
  }
  finalize(r, true);
  return r;
}

ProtocolResult eval_source_referencing(const langmodel::Policy& policy, const world::World& world,
                                       const std::vector<world::QAItem>& items,
                                       const episode::EpisodeBudget& budget, bool with_think) {
  ProtocolResult r;
  r.mode = with_think ? Protocol::kSourceRefThink : Protocol::kSourceRef;
  auto opts = greedy();
  opts.golden_context = true;
  opts.forced_first_token = Vocabulary::open_tag(with_think ? Tag::kThink : Tag::kAnswer);
  for (const auto& item : items) {
    if (!has_supporting_docs(world, item)) {
      ++r.skipped;
      continue;
    }
    const auto t = episode::run_episode(policy, world, item, budget, opts, 0);
    r.items.push_back({item.id, world::exact_match(t.answer, item.answer) ? 1.0 : 0.0,
                       episode::count_search_steps(t), t.answer});
  }
  finalize(r, true);
  return r;
}

ProtocolResult eval_query_rewriting(const langmodel::Policy& policy, const world::World& world,
                                    const std::vector<world::QAItem>& items,
                                    const episode::EpisodeBudget& budget) {
  ProtocolResult r;
  r.mode = Protocol::kQueryRewrite;
  auto opts = greedy();
  opts.stop_at_first_search = true;
  for (const auto& item : items) {
    if (item.hop_count() != 1) continue;
    const auto t = episode::run_episode(policy, world, item, budget, opts, 0);
    const auto query = episode::first_search_query(t);
    const bool ok = query && hit(world, *query, budget.retrieval_k, item.answer);
    r.items.push_back({item.id, ok ? 1.0 : 0.0, query ? 1u : 0u, query});
  }
  finalize(r, false);
  return r;
}

ProtocolResult eval_thinking_multihop(const langmodel::Policy& policy, const world::World& world,
                                      const std::vector<world::QAItem>& items,
                                      const episode::EpisodeBudget& budget) {
  ProtocolResult r;
  r.mode = Protocol::kThinkingMultihop;
  for (const auto& item : items) {
    if (item.hop_count() < 2) continue;
    const auto t = episode::run_episode(policy, world, item, budget, greedy(), 0);
    bool ok = false;
    for (const auto& q : t.search_queries) ok = ok || hit(world, q, budget.retrieval_k, item.answer);
    r.items.push_back({item.id, ok ? 1.0 : 0.0, episode::count_search_steps(t), t.answer});
  }
  finalize(r, true);
  return r;
}

ProtocolResult run_protocol(const langmodel::Policy& policy, const world::World& world,
                            const std::vector<world::QAItem>& items, const EvalProtocol& protocol) {
  protocol.validate();
  switch (protocol.mode) {
    case Protocol::kOverall: return eval_overall(policy, world, items, protocol.budget);
    case Protocol::kSourceRef: return eval_source_referencing(policy, world, items, protocol.budget, false);
    case Protocol::kSourceRefThink: return eval_source_referencing(policy, world, items, protocol.budget, true);
    case Protocol::kQueryRewrite: return eval_query_rewriting(policy, world, items, protocol.budget);
    case Protocol::kThinkingMultihop: return eval_thinking_multihop(policy, world, items, protocol.budget);
  }
  throw std::invalid_argument("run_protocol: unknown mode");
}

const std::vector<Protocol>& all_protocols() {
  static const std::vector<Protocol> all = {Protocol::kOverall, Protocol::kSourceRef, Protocol::kSourceRefThink,
                                            Protocol::kQueryRewrite, Protocol::kThinkingMultihop};
  return all;
}

Protocol parse_protocol(const std::string& name) {
  for (auto p : all_protocols())
    if (name == protocol_name(p)) return p;
  throw std::invalid_argument("unknown protocol '" + name +
                              "' (expected overall, source_ref, source_ref_think, query_rewrite or thinking_multihop)");
}

ArcReport run_arc(const langmodel::Policy& policy, const world::World& world,
                  const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget,
                  const std::string& config_digest, const std::vector<Protocol>& protocols) {
  auto any_hops = [&](auto pred) {
    return std::any_of(items.begin(), items.end(), [&](const auto& q) { return pred(q.hop_count()); });
  };
  for (auto p : protocols) {
    if (p == Protocol::kQueryRewrite && !any_hops([](std::size_t h) { return h == 1; })) {
      throw ProtocolMismatchError("query_rewrite needs one-hop questions; the QA set has none");
    }
    if (p == Protocol::kThinkingMultihop && !any_hops([](std::size_t h) { return h >= 2; })) {
      throw ProtocolMismatchError("thinking_multihop needs multi-hop questions; the QA set has none");
    }
  }
  ArcReport r;
  r.config_digest = config_digest;
  for (auto p : protocols) {
    auto result = run_protocol(policy, world, items, EvalProtocol::of(p, budget));
    switch (p) {
      case Protocol::kOverall: r.overall = std::move(result); break;
      case Protocol::kSourceRef: r.source_ref = std::move(result); break;
      case Protocol::kSourceRefThink: r.source_ref_think = std::move(result); break;
      case Protocol::kQueryRewrite: r.query_rewrite = std::move(result); break;
      case Protocol::kThinkingMultihop: r.thinking = std::move(result); break;
    }
  }
  return r;
}

ArcReport run_arc_suite(const langmodel::Policy& policy, const world::World& world,
                        const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget,
                        const std::string& config_digest) {
  ArcReport r;
  r.config_digest = config_digest;
  r.overall = eval_overall(policy, world, items, budget);
  r.source_ref = eval_source_referencing(policy, world, items, budget, false);
  r.source_ref_think = eval_source_referencing(policy, world, items, budget, true);
  r.query_rewrite = eval_query_rewriting(policy, world, items, budget);
  r.thinking = eval_thinking_multihop(policy, world, items, budget);
  return r;
}

namespace {

nlohmann::ordered_json protocol_json(const ProtocolResult& r) {
  nlohmann::ordered_json j;
  j["count"] = r.count;
  j["skipped"] = r.skipped;
  if (r.score) j["score"] = *r.score;
  if (r.mean_search_steps) j["mean_search_steps"] = *r.mean_search_steps;
  auto items = nlohmann::ordered_json::array();
  for (const auto& it : r.items) {
    nlohmann::ordered_json o;
    o["qa_id"] = it.qa_id;
    o["score"] = it.score;
    o["search_steps"] = it.search_steps;
    o["prediction"] = it.prediction ? nlohmann::ordered_json(*it.prediction) : nlohmann::ordered_json(nullptr);
    items.push_back(std::move(o));
  }
  j["items"] = std::move(items);
  return j;
}

}  // namespace

nlohmann::ordered_json report_to_json(const ArcReport& report) {
  nlohmann::ordered_json j;
  j["v"] = kReportSchemaVersion;
  j["kind"] = "arc_report";
  j["config_digest"] = report.config_digest;
  j["protocols"] = nlohmann::ordered_json::object();
  for (const auto* r : {&report.overall, &report.source_ref, &report.source_ref_think, &report.query_rewrite,
                        &report.thinking}) {
    if (*r) j["protocols"][protocol_name((*r)->mode)] = protocol_json(**r);
  }
  return j;
}

namespace {

std::string serialize(const ArcReport& report) { return report_to_json(report).dump(2) + "\n"; }

}  // namespace

void write_report(const ArcReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report: cannot open '" + path + "'");
  out << serialize(report);
  if (!out) throw std::runtime_error("write_report: write failed for '" + path + "'");
}

std::string report_digest(const ArcReport& report) { return util::digest_hex(serialize(report)); }

}  // namespace dgpo::arc
