#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "dgpo/langmodel/policy.hpp"

namespace dgpo::testing {

// Policy whose next token is a pure function of the context. The returned
// distribution is one-hot up to a tiny floor.
class FunctionPolicy final : public langmodel::Policy {
 public:
  using Rule = std::function<int(const std::vector<int>& context)>;

  FunctionPolicy(std::size_t vocab_size, Rule rule) : vocab_size_(vocab_size), rule_(std::move(rule)) {}

  std::unique_ptr<langmodel::PolicySession> start() const override {
    return std::make_unique<Session>(*this);
  }
  std::size_t vocab_size() const override { return vocab_size_; }

 private:
  class Session final : public langmodel::PolicySession {
   public:
    explicit Session(const FunctionPolicy& p) : p_(p) {}
    void push(int token) override { ctx_.push_back(token); }
    std::span<const double> next_logprobs() override {
      const double floor = 1e-9;
      const double off = std::log(floor);
      row_.assign(p_.vocab_size_, off);
      row_[static_cast<std::size_t>(p_.rule_(ctx_))] =
          std::log1p(-floor * static_cast<double>(p_.vocab_size_ - 1));
      return row_;
    }

   private:
    const FunctionPolicy& p_;
    std::vector<int> ctx_;
    std::vector<double> row_;
  };

  std::size_t vocab_size_;
  Rule rule_;
};

// Emits `script` after the prompt, skipping over information blocks injected
// by the engine, then EOS.
inline FunctionPolicy script_policy(std::size_t vocab_size, std::vector<int> script) {
  using langmodel::Tag;
  using langmodel::Vocabulary;
  return FunctionPolicy(vocab_size, [script](const std::vector<int>& ctx) {
    std::size_t i = 0;
    while (i < ctx.size() && !Vocabulary::tag_of(ctx[i]) && ctx[i] != Vocabulary::kEos) ++i;
    std::size_t n = 0;
    bool in_info = false;
    for (; i < ctx.size(); ++i) {
      if (ctx[i] == Vocabulary::open_tag(Tag::kInformation)) in_info = true;
      if (!in_info) ++n;
      if (ctx[i] == Vocabulary::close_tag(Tag::kInformation)) in_info = false;
    }
    return n < script.size() ? script[n] : Vocabulary::kEos;
  });
}

}  // namespace dgpo::testing
