#include "dgpo/distill/kl.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dgpo::distill {

double kl_divergence(std::span<const double> logp, std::span<const double> logq) {
  if (logp.size() != logq.size()) throw std::invalid_argument("kl_divergence: row size mismatch");
  double total = 0.0;
  for (std::size_t v = 0; v < logp.size(); ++v) {
    const double p = std::exp(logp[v]);
    if (p == 0.0) continue;
    if (std::isinf(logq[v])) return std::numeric_limits<double>::infinity();
    total += p * (logp[v] - logq[v]);
  }
  return total;
}

std::vector<std::size_t> masked_positions(std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) out.push_back(t);
  return out;
}

std::vector<std::vector<double>> policy_rows(const langmodel::Policy& policy,
                                             const episode::Trajectory& traj) {
  const auto positions = masked_positions(traj.mask);
  return policy.logprobs_at(traj.tokens, positions);
}

double sequence_reverse_kl(const langmodel::Policy& student, const langmodel::Policy& anchor,
                           const episode::Trajectory& traj) {
  const auto s = policy_rows(student, traj);
  const auto a = policy_rows(anchor, traj);
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += reverse_kl(s[i], a[i]);
  return total;
}

}  // namespace dgpo::distill
