#include "dgpo/world/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "dgpo/world/protocol.hpp"

namespace dgpo::world {

using langmodel::Tag;
using langmodel::Vocabulary;

namespace {

struct Block {
  Tag tag;
  std::vector<int> content;
  bool closed = false;
};

// Lenient block scan of the response part of a context. Stray tokens outside
// blocks are ignored; an opening tag inside an open block starts a new block.
std::vector<Block> scan_blocks(std::span<const int> response) {
  std::vector<Block> blocks;
  for (int tok : response) {
    const auto tag = Vocabulary::tag_of(tok);
    const bool open = !blocks.empty() && !blocks.back().closed;
    if (tag && !tag->closing) {
      if (open) blocks.back().closed = true;
      blocks.push_back({tag->tag, {}, false});
    } else if (tag) {
      if (open) blocks.back().closed = true;
    } else if (open) {
      blocks.back().content.push_back(tok);
    }
  }
  return blocks;
}

bool contains_run(const std::vector<int>& hay, const std::vector<int>& needle) {
  return !needle.empty() &&
         std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

const QAItem& item_for(const World& world, std::span<const int> context) {
  const auto q = question_from_context(world.vocabulary(), context);
  if (!q) throw UnknownQuestionError("context carries no question prompt");
  const QAItem* item = world.find_question(*q);
  if (!item) throw UnknownQuestionError("question not in world: '" + *q + "'");
  return *item;
}

int next_token(const World& world, const QAItem& item, std::span<const int> context) {
  const auto& vocab = world.vocabulary();
  const std::size_t start = prompt_length(context);
  const auto blocks = scan_blocks(context.subspan(start));

  std::size_t resolved = 0;
  for (const auto& hop : item.hops) {
    const auto fact = vocab.encode(fact_sentence(hop.relation, hop.subject, hop.object));
    const bool seen = std::any_of(blocks.begin(), blocks.end(), [&](const Block& b) {
      return b.tag == Tag::kInformation && contains_run(b.content, fact);
    });
    if (!seen) break;
    ++resolved;
  }
  const bool done = resolved == item.hops.size();

  if (blocks.empty() || blocks.back().closed) {
    if (blocks.empty()) return Vocabulary::open_tag(Tag::kThink);
    switch (blocks.back().tag) {
      case Tag::kAnswer: return Vocabulary::kEos;
      case Tag::kThink: return Vocabulary::open_tag(done ? Tag::kAnswer : Tag::kSearch);
      default: return Vocabulary::open_tag(Tag::kThink);
    }
  }

  const Block& open = blocks.back();
  std::vector<int> target;
  switch (open.tag) {
    case Tag::kThink: {
      if (resolved == 0) {
        const auto& h = item.hops.front();
        target = vocab.encode("find the " + h.relation + " of " + h.subject);
      } else {
        const auto& h = item.hops[resolved - 1];
        target = vocab.encode("the " + h.relation + " of " + h.subject + " is " + h.object);
      }
      break;
    }
    case Tag::kSearch:
      target = vocab.encode(item.hops[std::min(resolved, item.hops.size() - 1)].query);
      break;
    case Tag::kAnswer:
      target = vocab.encode(item.answer);
      break;
    case Tag::kInformation:
      break;
  }
  const auto& c = open.content;
  if (c.size() < target.size() && std::equal(c.begin(), c.end(), target.begin())) {
    return target[c.size()];
  }
  return Vocabulary::close_tag(open.tag);
}

std::vector<double> smoothed_logprobs(std::size_t vocab_size, int target, double eta) {
  const double off = eta > 0.0 ? std::log(eta / static_cast<double>(vocab_size - 1))
                               : -std::numeric_limits<double>::infinity();
  std::vector<double> lp(vocab_size, off);
  lp[static_cast<std::size_t>(target)] = std::log1p(-eta);
  return lp;
}

class OracleSession final : public langmodel::PolicySession {
 public:
  OracleSession(const World& world, double eta) : world_(&world), eta_(eta) {}

  void push(int token) override {
    tokens_.push_back(token);
    cached_.reset();
  }

  std::span<const double> next_logprobs() override {
    if (!cached_) {
      if (!item_) item_ = &item_for(*world_, tokens_);
      const int t = next_token(*world_, *item_, tokens_);
      row_ = smoothed_logprobs(world_->vocabulary().size(), t, eta_);
      cached_ = t;
    }
    return row_;
  }

 private:
  const World* world_;
  double eta_;
  const QAItem* item_ = nullptr;
  std::vector<int> tokens_;
  std::optional<int> cached_;
  std::vector<double> row_;
};

}  // namespace

int scripted_next_token(const World& world, std::span<const int> context) {
  return next_token(world, item_for(world, context), context);
}

langmodel::TokenDistribution oracle_teacher_policy(const World& world, std::span<const int> context,
                                                   double eta) {
  const int t = scripted_next_token(world, context);
  return langmodel::TokenDistribution::from_logprobs(
      smoothed_logprobs(world.vocabulary().size(), t, eta));
}

OracleTeacher::OracleTeacher(const World& world, double eta) : world_(&world), eta_(eta) {
  if (!(eta >= 0.0 && eta < 1.0)) throw std::invalid_argument("OracleTeacher: eta must be in [0, 1)");
}

std::unique_ptr<langmodel::PolicySession> OracleTeacher::start() const {
  return std::make_unique<OracleSession>(*world_, eta_);
}

std::size_t OracleTeacher::vocab_size() const { return world_->vocabulary().size(); }

}  // namespace dgpo::world
