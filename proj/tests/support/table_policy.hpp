#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "dgpo/langmodel/policy.hpp"

namespace dgpo::testing {

// Policy whose next-token distribution depends only on the context length:
// after n pushed tokens it returns rows[min(n, rows.size()) - 1] (given as
// probabilities).
class TablePolicy final : public langmodel::Policy {
 public:
  explicit TablePolicy(std::vector<std::vector<double>> prob_rows) {
    for (const auto& r : prob_rows) {
      std::vector<double> lp;
      for (double p : r) lp.push_back(std::log(p));
      rows_.push_back(std::move(lp));
    }
  }

  std::unique_ptr<langmodel::PolicySession> start() const override {
    return std::make_unique<Session>(*this);
  }
  std::size_t vocab_size() const override { return rows_.front().size(); }

 private:
  class Session final : public langmodel::PolicySession {
   public:
    explicit Session(const TablePolicy& p) : p_(p) {}
    void push(int) override { ++n_; }
    std::span<const double> next_logprobs() override {
      const std::size_t i = n_ == 0 ? 0 : std::min(n_, p_.rows_.size()) - 1;
      return p_.rows_[i];
    }

   private:
    const TablePolicy& p_;
    std::size_t n_ = 0;
  };

  std::vector<std::vector<double>> rows_;
};

}  // namespace dgpo::testing
