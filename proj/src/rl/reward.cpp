#include "dgpo/rl/reward.hpp"

#include "dgpo/distill/kl.hpp"
#include "dgpo/world/text.hpp"

namespace dgpo::rl {

double answer_reward(const std::optional<std::string>& prediction, std::string_view gold) {
  return world::exact_match(prediction, gold) ? 1.0 : 0.0;
}

namespace {

RewardRecord kl_record(const episode::Trajectory& traj, const langmodel::Policy& student,
                       const langmodel::Policy& anchor, double beta, double answer) {
  RewardRecord r;
  r.answer = answer;
  r.total = answer;
  if (beta == 0.0) return r;
  const auto s = distill::policy_rows(student, traj);
  const auto a = distill::policy_rows(anchor, traj);
  double seq = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    r.token_kl.push_back(distill::reverse_kl(s[i], a[i]));
    seq += r.token_kl.back();
  }
  r.kl_penalty = -beta * seq;
  r.total = answer + r.kl_penalty;
  return r;
}

}  // namespace

RewardRecord selective_kl_reward(const episode::Trajectory& traj, const langmodel::Policy& student,
                                 const langmodel::Policy& teacher, double beta, bool correct) {
  if (correct) return {1.0, 0.0, 1.0, {}};
  return kl_record(traj, student, teacher, beta, 0.0);
}

RewardRecord uniform_kl_reward(const episode::Trajectory& traj, const langmodel::Policy& student,
                               const langmodel::Policy& anchor, double beta, double answer) {
  return kl_record(traj, student, anchor, beta, answer);
}

}  // namespace dgpo::rl
