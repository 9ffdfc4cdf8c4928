#pragma once

#include <span>
#include <vector>

#include "dgpo/episode/episode.hpp"
#include "dgpo/rl/reward.hpp"

namespace dgpo::rl {

// Advantages and value targets over the mask-1 subsequence of a trajectory.
struct AdvantageSet {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// GAE over one decision sequence with V after the last step taken as 0:
//   delta_i = r_i + gamma * V_{i+1} - V_i
//   A_i     = delta_i + gamma * lambda * A_{i+1}
//   R_i     = A_i + V_i
AdvantageSet compute_gae(std::span<const double> rewards, std::span<const double> values,
                         double gamma, double lambda);

// Value estimates recorded at the mask-1 positions.
std::vector<double> step_values(const episode::Trajectory& traj);

// Per-step rewards: the whole terminal reward on the last step, or with
// `per_token_kl` the answer reward on the last step and -beta * KL_i on
// step i.
std::vector<double> step_rewards(const RewardRecord& reward, std::size_t steps, double beta,
                                 bool per_token_kl);

}  // namespace dgpo::rl
