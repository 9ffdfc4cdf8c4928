#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dgpo/episode/grammar.hpp"
#include "dgpo/langmodel/policy.hpp"
#include "dgpo/world/world.hpp"

namespace dgpo::episode {

struct EpisodeBudget {
  // A turn is one search-and-retrieve round; an episode that never searches
  // still uses one turn.
  std::size_t max_turns = 4;
  std::size_t max_turn_tokens = 500;
  std::size_t max_total_length = 512;
  std::size_t retrieval_k = 3;

  void validate() const;
};

struct EpisodeOptions {
  // 0 selects greedy decoding.
  double temperature = 1.0;
  // Prefill the supporting documents of the item as an information block
  // right after the prompt.
  bool golden_context = false;
  // Token the engine forces as the policy's first output.
  std::optional<int> forced_first_token;
  // Stop as soon as the first search block closes, without retrieving.
  bool stop_at_first_search = false;
};

enum class FinishReason { kAnswer, kEos, kMalformed, kTurnLimit, kTokenLimit, kLengthLimit, kStopped };

std::string_view finish_reason_name(FinishReason r);

struct Trajectory {
  std::vector<int> tokens;
  // 1 = generated by the policy, 0 = prompt or injected by the engine.
  std::vector<std::uint8_t> mask;
  ParseResult parse;
  // Per position t with mask 1: log pi(tokens[t] | tokens[<t]) and the value
  // estimate of the state tokens[<t]. Zero where mask is 0.
  std::vector<double> old_logprobs;
  std::vector<double> values;
  double reward = 0.0;
  std::optional<std::string> answer;
  std::vector<std::string> search_queries;
  std::size_t turn_count = 0;
  std::size_t prompt_length = 0;
  FinishReason finish = FinishReason::kEos;
  int qa_id = -1;

  std::size_t size() const { return tokens.size(); }
  std::size_t generated_count() const;
};

// Rolls `policy` through the tag protocol on one QA item. Deterministic in
// (policy, world, item, budget, options, seed). Never throws on malformed
// generations: they end the episode without an answer.
Trajectory run_episode(const langmodel::Policy& policy, const world::World& world,
                       const world::QAItem& item, const EpisodeBudget& budget,
                       const EpisodeOptions& options, std::uint64_t seed);

// Whitespace-normalized text of the first answer span, if any.
std::optional<std::string> extract_answer(const langmodel::Vocabulary& vocab,
                                          std::span<const int> tokens);
std::optional<std::string> extract_answer(const Trajectory& traj);

// Text of the first completed search span.
std::optional<std::string> first_search_query(const langmodel::Vocabulary& vocab,
                                              std::span<const int> tokens);
std::optional<std::string> first_search_query(const Trajectory& traj);

// Number of completed search spans.
std::size_t count_search_steps(std::span<const int> tokens);
std::size_t count_search_steps(const Trajectory& traj);

// Run-length encoding of the mask as (bit, length) pairs.
std::vector<std::pair<int, std::size_t>> mask_runs(std::span<const std::uint8_t> mask);

// One JSON line per trajectory for offline inspection.
void write_trajectory_log(std::ostream& out, const Trajectory& traj, const world::World& world);

}  // namespace dgpo::episode
