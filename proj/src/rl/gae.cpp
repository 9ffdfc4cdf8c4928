#include "dgpo/rl/gae.hpp"

#include <stdexcept>

namespace dgpo::rl {

AdvantageSet compute_gae(std::span<const double> rewards, std::span<const double> values,
                         double gamma, double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("compute_gae: length mismatch");
  const std::size_t n = rewards.size();
  AdvantageSet out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = k + 1 < n ? values[k + 1] : 0.0;
    const double delta = rewards[k] + gamma * next_value - values[k];
    next_adv = delta + gamma * lambda * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
  }
  return out;
}

std::vector<double> step_values(const episode::Trajectory& traj) {
  std::vector<double> v;
  for (std::size_t t = 0; t < traj.mask.size(); ++t)
    if (traj.mask[t]) v.push_back(traj.values[t]);
  return v;
}

std::vector<double> step_rewards(const RewardRecord& reward, std::size_t steps, double beta,
                                 bool per_token_kl) {
  std::vector<double> r(steps, 0.0);
  if (steps == 0) return r;
  if (per_token_kl && !reward.token_kl.empty()) {
    if (reward.token_kl.size() != steps) throw std::invalid_argument("step_rewards: KL length mismatch");
    for (std::size_t i = 0; i < steps; ++i) r[i] = -beta * reward.token_kl[i];
    r.back() += reward.answer;
  } else {
    r.back() = reward.total;
  }
  return r;
}

}  // namespace dgpo::rl
