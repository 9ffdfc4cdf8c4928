#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>

#include "dgpo/langmodel/policy.hpp"
#include "dgpo/world/world.hpp"

namespace dgpo::world {

class UnknownQuestionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Token the scripted solver would emit next after `context`.
//
// The script walks think -> search -> information -> think ... -> answer:
// it searches each hop's oracle query in order, states each retrieved fact
// in a think block, and answers once every hop's fact has been seen inside
// an information block. Inside an open block whose content already departs
// from the script, or is complete, the next token closes the block.
int scripted_next_token(const World& world, std::span<const int> context);

// Smoothed scripted distribution: 1 - eta on the scripted token, eta spread
// uniformly over the rest of the vocabulary.
langmodel::TokenDistribution oracle_teacher_policy(const World& world,
                                                   std::span<const int> context,
                                                   double eta = 0.05);

class OracleTeacher final : public langmodel::Policy {
 public:
  explicit OracleTeacher(const World& world, double eta = 0.05);

  std::unique_ptr<langmodel::PolicySession> start() const override;
  std::size_t vocab_size() const override;
  double eta() const { return eta_; }

 private:
  const World* world_;
  double eta_;
};

}  // namespace dgpo::world
