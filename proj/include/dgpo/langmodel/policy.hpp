#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dgpo/langmodel/model.hpp"

namespace dgpo::langmodel {

// Next-token distribution at one position.
struct TokenDistribution {
  std::vector<double> probs;
  std::vector<double> logprobs;

  static TokenDistribution from_logits(std::span<const double> logits);
  static TokenDistribution from_logprobs(std::span<const double> logprobs);
  int argmax() const;
};

// Stateful view of a policy along one growing token sequence.
class PolicySession {
 public:
  virtual ~PolicySession() = default;
  virtual void push(int token) = 0;
  // Log-probabilities of the next token given every token pushed so far.
  virtual std::span<const double> next_logprobs() = 0;
  // Value estimate of the current state; zero for policies without a critic.
  virtual double value() { return 0.0; }
};

// Anything that can emit next-token distributions: the student model, a
// trained teacher model, or the scripted oracle teacher.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::unique_ptr<PolicySession> start() const = 0;
  virtual std::size_t vocab_size() const = 0;

  // Log-probability rows for predicting tokens[t] from tokens[<t], for each t
  // in `positions` (each position must be >= 1).
  std::vector<std::vector<double>> logprobs_at(std::span<const int> tokens,
                                               std::span<const std::size_t> positions) const;
};

class ModelPolicy final : public Policy {
 public:
  explicit ModelPolicy(const PolicyModel& model) : model_(&model) {}
  std::unique_ptr<PolicySession> start() const override;
  std::size_t vocab_size() const override { return model_->config().vocab_size; }
  const PolicyModel& model() const { return *model_; }

 private:
  const PolicyModel* model_;
};

// Draws from softmax(logprobs / temperature). temperature must be > 0.
int sample_token(std::span<const double> logprobs, double temperature, std::mt19937_64& rng);
int argmax_token(std::span<const double> logprobs);

// Samples the token following `prefix` (non-empty) from the model.
int sample_step(const PolicyModel& model, std::span<const int> prefix, double temperature,
                std::uint64_t seed);

}  // namespace dgpo::langmodel
