#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/policy.hpp"

namespace dgpo::rl {

// 1 iff the normalized prediction equals the normalized gold answer.
double answer_reward(const std::optional<std::string>& prediction, std::string_view gold);

struct RewardRecord {
  double answer = 0.0;
  double kl_penalty = 0.0;  // -beta * sequence KL, or 0
  double total = 0.0;
  // Per mask-1 position D_KL(student || anchor); empty when no KL was computed.
  std::vector<double> token_kl;
};

// Correct trajectories get exactly {1, 0, 1}. Incorrect ones get
// total = -beta * sum over mask-1 positions of D_KL(student || teacher).
RewardRecord selective_kl_reward(const episode::Trajectory& traj, const langmodel::Policy& student,
                                 const langmodel::Policy& teacher, double beta, bool correct);

// Penalty applied to every trajectory: total = answer - beta * sequence KL.
// The anchor is the teacher or a frozen reference copy of the student.
RewardRecord uniform_kl_reward(const episode::Trajectory& traj, const langmodel::Policy& student,
                               const langmodel::Policy& anchor, double beta, double answer);

}  // namespace dgpo::rl
