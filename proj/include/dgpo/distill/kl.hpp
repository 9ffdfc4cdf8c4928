#pragma once

#include <span>
#include <vector>

#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/policy.hpp"

namespace dgpo::distill {

// D_KL(p || q) = sum_v p_v (log p_v - log q_v) from log-probability rows.
// Terms with p_v = 0 contribute nothing; p_v > 0 with q_v = 0 gives +inf.
double kl_divergence(std::span<const double> logp, std::span<const double> logq);

// D_KL(teacher || student): the distillation direction.
inline double forward_kl(std::span<const double> teacher, std::span<const double> student) {
  return kl_divergence(teacher, student);
}
// D_KL(student || teacher): the on-policy and penalty direction.
inline double reverse_kl(std::span<const double> student, std::span<const double> teacher) {
  return kl_divergence(student, teacher);
}

// Indices t with mask[t] == 1, ascending.
std::vector<std::size_t> masked_positions(std::span<const std::uint8_t> mask);

// Next-token log-probability rows of `policy` at every mask-1 position of
// the trajectory: row i predicts tokens[p_i] from tokens[< p_i].
std::vector<std::vector<double>> policy_rows(const langmodel::Policy& policy,
                                             const episode::Trajectory& traj);

// Sum over mask-1 positions of D_KL(student || anchor), evaluated exactly by
// full-vocabulary summation.
double sequence_reverse_kl(const langmodel::Policy& student, const langmodel::Policy& anchor,
                           const episode::Trajectory& traj);

}  // namespace dgpo::distill
