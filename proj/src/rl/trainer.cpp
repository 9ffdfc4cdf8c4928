#include "dgpo/rl/trainer.hpp"

#include <memory>
#include <random>
#include <stdexcept>

#include "dgpo/rl/gae.hpp"
#include "dgpo/rl/reward.hpp"
#include "dgpo/util/hashing.hpp"

namespace dgpo::rl {

void RLConfig::validate() const {
  ppo.validate();
  budget.validate();
  if (!(temperature > 0.0)) throw std::invalid_argument("RLConfig: temperature must be positive");
  if (!(collapse.ratio > 0.0 && collapse.ratio < 1.0)) throw std::invalid_argument("RLConfig: collapse ratio must be in (0, 1)");
}

RLTrainer::RLTrainer(langmodel::PolicyModel& student, const langmodel::Policy* teacher,
                     const langmodel::PolicyModel* reference, const world::World& world,
                     std::vector<world::QAItem> train_items, RLConfig config, std::uint64_t seed,
                     EvalFn validate)
    : student_(&student),
      teacher_(teacher),
      reference_(reference),
      world_(&world),
      items_(std::move(train_items)),
      config_(std::move(config)),
      seed_(seed),
      validate_(std::move(validate)),
      optimizer_(make_ppo_optimizer(config_.ppo)) {
  config_.validate();
  if (items_.empty()) throw std::invalid_argument("RLTrainer: no training items");
  const auto mode = config_.ppo.kl_mode;
  if ((mode == KLMode::kSelectiveTeacher || mode == KLMode::kUniformTeacher) && !teacher_) {
    throw std::invalid_argument(std::string("RLTrainer: kl_mode ") + kl_mode_name(mode) + " needs a teacher");
  }
  if (mode == KLMode::kUniformReference && !reference_) {
    throw std::invalid_argument("RLTrainer: kl_mode uniform_reference needs a reference model");
  }
}

bool RLTrainer::finished() const {
  return collapsed() || progress_.step >= config_.steps;
}

RLStepRecord RLTrainer::step() {
  if (finished()) throw std::logic_error("RLTrainer::step: phase already finished");
  const std::size_t s = progress_.step + 1;
  const auto& ppo = config_.ppo;
  RLStepRecord rec;

  // The policy entering the phase seeds the running peak.
  if (s == 1 && validate_ && config_.eval_every > 0 && config_.collapse.enabled) {
    const double em = validate_(*student_);
    rec.initial_val_em = em;
    progress_.peak_val_em = std::max(progress_.peak_val_em, em);
  }

  // Batch: partial Fisher-Yates draws without replacement, restarting the
  // pool whenever it is exhausted.
  std::mt19937_64 rng(util::mix_seed(seed_, 0x726c, s));
  const std::size_t N = items_.size();
  std::vector<std::size_t> pool(N);
  std::vector<std::size_t> picks;
  for (std::size_t i = 0; i < ppo.rollout_batch; ++i) {
    const std::size_t base = i % N;
    if (base == 0)
      for (std::size_t j = 0; j < N; ++j) pool[j] = j;
    std::swap(pool[base], pool[base + rng() % (N - base)]);
    picks.push_back(pool[base]);
  }

  const langmodel::ModelPolicy policy(*student_);
  std::unique_ptr<langmodel::ModelPolicy> ref_policy;
  if (reference_) ref_policy = std::make_unique<langmodel::ModelPolicy>(*reference_);
  episode::EpisodeOptions opts;
  opts.temperature = config_.temperature;

  rec.step = s;
  std::vector<episode::Trajectory> trajs;
  std::vector<RewardRecord> rewards;
  std::vector<PPOSample> batch;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto& item = items_[picks[i]];
    auto traj = episode::run_episode(policy, *world_, item, config_.budget, opts, util::mix_seed(seed_, s, i));
    const double answer = answer_reward(traj.answer, item.answer);
    RewardRecord reward;
    switch (ppo.kl_mode) {
      case KLMode::kSelectiveTeacher:
        reward = selective_kl_reward(traj, policy, *teacher_, ppo.beta, answer == 1.0);
        break;
      case KLMode::kUniformTeacher:
        reward = uniform_kl_reward(traj, policy, *teacher_, ppo.beta, answer);
        break;
      case KLMode::kUniformReference:
        reward = uniform_kl_reward(traj, policy, *ref_policy, ppo.beta, answer);
        break;
      case KLMode::kNone:
        reward = {answer, 0.0, answer, {}};
        break;
    }
    traj.reward = reward.total;
    rec.reward += reward.total;
    rec.em += reward.answer;
    rec.kl_penalty += reward.kl_penalty;
    rec.search_steps += static_cast<double>(traj.search_queries.size());
    rec.response_tokens += static_cast<double>(traj.generated_count());

    trajs.push_back(std::move(traj));
    rewards.push_back(std::move(reward));
  }
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto values = step_values(trajs[i]);
    if (values.empty()) continue;
    const auto r = step_rewards(rewards[i], values.size(), ppo.beta, ppo.per_token_kl);
    auto adv = compute_gae(r, values, ppo.gamma, ppo.gae_lambda);
    batch.push_back({&trajs[i], std::move(adv.advantages), std::move(adv.returns)});
  }
  const double n = static_cast<double>(picks.size());
  rec.reward /= n;
  rec.em /= n;
  rec.kl_penalty /= n;
  rec.search_steps /= n;
  rec.response_tokens /= n;

  if (!batch.empty()) {
    if (ppo.whiten_advantages) whiten_advantages(batch);
    rec.update = ppo_update(*student_, optimizer_, batch, ppo, util::mix_seed(seed_, 0x7570, s));
  }
  progress_.step = s;

  const bool eval_now = validate_ && config_.eval_every > 0 &&
                        (s % config_.eval_every == 0 || s == config_.steps);
  if (eval_now) {
    const double em = validate_(*student_);
    rec.val_em = em;
    if (em > progress_.peak_val_em) progress_.peak_val_em = em;
    const auto& c = config_.collapse;
    if (c.enabled && progress_.peak_val_em >= c.min_peak && em < c.ratio * progress_.peak_val_em) {
      progress_.collapse_step = s;
      rec.collapsed = true;
    }
  }
  return rec;
}

}  // namespace dgpo::rl
