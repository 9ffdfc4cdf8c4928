#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/policy.hpp"
#include "dgpo/world/world.hpp"

namespace dgpo::arc {

inline constexpr int kReportSchemaVersion = 1;

enum class Protocol { kOverall, kSourceRef, kSourceRefThink, kQueryRewrite, kThinkingMultihop };

const char* protocol_name(Protocol p);

struct EvalProtocol {
  Protocol mode = Protocol::kOverall;
  bool golden_context = false;
  bool forced_answer = false;
  episode::EpisodeBudget budget;

  // Canonical settings for a mode.
  static EvalProtocol of(Protocol mode, const episode::EpisodeBudget& budget);
  // Throws std::invalid_argument when source_ref lacks golden context or
  // forced answer.
  void validate() const;
};

struct ItemRecord {
  int qa_id = -1;
  double score = 0.0;  // EM or hit, 0 or 1
  std::size_t search_steps = 0;
  std::optional<std::string> prediction;  // answer, or the first query for query rewriting
};

struct ProtocolResult {
  Protocol mode = Protocol::kOverall;
  std::size_t count = 0;    // items evaluated
  std::size_t skipped = 0;  // items without usable supporting documents
  std::optional<double> score;  // mean item score; absent when count is 0
  std::optional<double> mean_search_steps;
  std::vector<ItemRecord> items;
};

// Greedy episodes, mean answer reward.
ProtocolResult eval_overall(const langmodel::Policy& policy, const world::World& world,
                            const std::vector<world::QAItem>& items,
                            const episode::EpisodeBudget& budget);

// Gold supporting documents are injected after the prompt. Without thinking
// the first generated token is forced to open an answer block; with
// thinking it is forced to open a think block.
ProtocolResult eval_source_referencing(const langmodel::Policy& policy, const world::World& world,
                                       const std::vector<world::QAItem>& items,
                                       const episode::EpisodeBudget& budget, bool with_think);

// One-hop items only. Decodes until the first search closes, retrieves the
// top retrieval_k documents for that query and scores a hit when any body
// contains the normalized gold answer. No search counts as a miss.
ProtocolResult eval_query_rewriting(const langmodel::Policy& policy, const world::World& world,
                                    const std::vector<world::QAItem>& items,
                                    const episode::EpisodeBudget& budget);

// Multi-hop items only. Full episodes; a hit when any document retrieved at
// any step contains the normalized gold answer. Also reports mean completed
// search spans.
ProtocolResult eval_thinking_multihop(const langmodel::Policy& policy, const world::World& world,
                                      const std::vector<world::QAItem>& items,
                                      const episode::EpisodeBudget& budget);

ProtocolResult run_protocol(const langmodel::Policy& policy, const world::World& world,
                            const std::vector<world::QAItem>& items, const EvalProtocol& protocol);

// Protocols that were not requested stay empty and are omitted from the
// JSON rendering.
struct ArcReport {
  std::string config_digest;
  std::optional<ProtocolResult> overall;
  std::optional<ProtocolResult> source_ref;
  std::optional<ProtocolResult> source_ref_think;
  std::optional<ProtocolResult> query_rewrite;
  std::optional<ProtocolResult> thinking;
};

const std::vector<Protocol>& all_protocols();
Protocol parse_protocol(const std::string& name);

// Raised when a requested protocol has no applicable items in the QA set.
class ProtocolMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Runs the requested protocols. Requesting query_rewrite without one-hop
// items or thinking_multihop without multi-hop items raises
// ProtocolMismatchError.
ArcReport run_arc(const langmodel::Policy& policy, const world::World& world,
                  const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget,
                  const std::string& config_digest, const std::vector<Protocol>& protocols);

// Every protocol, without applicability checks.
ArcReport run_arc_suite(const langmodel::Policy& policy, const world::World& world,
                        const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget,
                        const std::string& config_digest);

nlohmann::ordered_json report_to_json(const ArcReport& report);
// Writes the JSON report (two-space indent, trailing newline).
void write_report(const ArcReport& report, const std::string& path);
// FNV-1a digest of the serialized report.
std::string report_digest(const ArcReport& report);

}  // namespace dgpo::arc
