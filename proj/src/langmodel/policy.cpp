#include "dgpo/langmodel/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dgpo/numerics/kernels.hpp"
#include "dgpo/util/hashing.hpp"

namespace dgpo::langmodel {

TokenDistribution TokenDistribution::from_logits(std::span<const double> logits) {
  TokenDistribution d;
  d.logprobs.resize(logits.size());
  numerics::kernels::log_softmax_row(logits.data(), d.logprobs.data(), logits.size());
  d.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) d.probs[i] = std::exp(d.logprobs[i]);
  return d;
}

TokenDistribution TokenDistribution::from_logprobs(std::span<const double> logprobs) {
  TokenDistribution d;
  d.logprobs.assign(logprobs.begin(), logprobs.end());
  d.probs.resize(logprobs.size());
  for (std::size_t i = 0; i < logprobs.size(); ++i) d.probs[i] = std::exp(logprobs[i]);
  return d;
}

int TokenDistribution::argmax() const { return argmax_token(logprobs); }

std::vector<std::vector<double>> Policy::logprobs_at(std::span<const int> tokens,
                                                     std::span<const std::size_t> positions) const {
  std::vector<std::vector<double>> rows;
  rows.reserve(positions.size());
  auto session = start();
  std::size_t pushed = 0;
  for (std::size_t pos : positions) {
    if (pos == 0 || pos > tokens.size() || pos < pushed) {
      throw std::invalid_argument("Policy::logprobs_at: positions must be increasing and in [1, len]");
    }
    while (pushed < pos) session->push(tokens[pushed++]);
    auto lp = session->next_logprobs();
    rows.emplace_back(lp.begin(), lp.end());
  }
  return rows;
}

namespace {

class ModelSession final : public PolicySession {
 public:
  explicit ModelSession(const PolicyModel& model)
      : decoder_(model), logprobs_(model.config().vocab_size) {}

  void push(int token) override {
    decoder_.push(token);
    fresh_ = false;
  }

  std::span<const double> next_logprobs() override {
    if (decoder_.length() == 0) throw std::logic_error("ModelSession: no context pushed");
    if (!fresh_) {
      numerics::kernels::log_softmax_row(decoder_.logits().data(), logprobs_.data(), logprobs_.size());
      fresh_ = true;
    }
    return logprobs_;
  }

  double value() override { return decoder_.value(); }

 private:
  Decoder decoder_;
  std::vector<double> logprobs_;
  bool fresh_ = false;
};

}  // namespace

std::unique_ptr<PolicySession> ModelPolicy::start() const {
  return std::make_unique<ModelSession>(*model_);
}

int argmax_token(std::span<const double> logprobs) {
  return static_cast<int>(std::max_element(logprobs.begin(), logprobs.end()) - logprobs.begin());
}

int sample_token(std::span<const double> logprobs, double temperature, std::mt19937_64& rng) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_token: temperature must be > 0");
  double mx = -std::numeric_limits<double>::infinity();
  for (double lp : logprobs) mx = std::max(mx, lp);
  std::vector<double> w(logprobs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp((logprobs[i] - mx) / temperature);
    total += w[i];
  }
  const double u = util::uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u at the very top; take the last token with mass.
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

int sample_step(const PolicyModel& model, std::span<const int> prefix, double temperature,
                std::uint64_t seed) {
  if (prefix.empty()) throw std::invalid_argument("sample_step: empty prefix");
  Decoder dec(model);
  for (int t : prefix) dec.push(t);
  const auto d = TokenDistribution::from_logits(dec.logits());
  std::mt19937_64 rng(seed);
  return sample_token(d.logprobs, temperature, rng);
}

}  // namespace dgpo::langmodel
