#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/model.hpp"
#include "dgpo/langmodel/policy.hpp"
#include "dgpo/numerics/optimizer.hpp"
#include "dgpo/rl/ppo.hpp"
#include "dgpo/world/world.hpp"

namespace dgpo::rl {

// Halts the RL phase once validation EM falls below `ratio` times its
// running peak, which includes the policy entering the phase. Peaks below
// `min_peak` never trigger it.
struct CollapseConfig {
  bool enabled = true;
  double ratio = 0.2;
  double min_peak = 0.1;
};

struct RLConfig {
  PPOConfig ppo;
  episode::EpisodeBudget budget;
  std::size_t steps = 1500;
  double temperature = 1.0;
  // Validation cadence in steps; 0 disables validation.
  std::size_t eval_every = 50;
  CollapseConfig collapse;

  void validate() const;
};

struct RLStepRecord {
  std::size_t step = 0;  // 1-based index of the completed step
  double reward = 0.0;   // mean total reward
  double em = 0.0;       // mean answer reward
  double kl_penalty = 0.0;
  double search_steps = 0.0;
  double response_tokens = 0.0;
  PPOUpdateMetrics update;
  std::optional<double> val_em;
  // Validation EM of the policy before the first update (step 1 only).
  std::optional<double> initial_val_em;
  bool collapsed = false;
};

// Progress that must survive a checkpoint/resume cycle besides the model
// and optimizer tensors.
struct RLProgress {
  std::size_t step = 0;
  double peak_val_em = 0.0;
  std::optional<std::size_t> collapse_step;
};

using EvalFn = std::function<double(const langmodel::PolicyModel&)>;

// Rollout / reward / GAE / PPO loop. Step s draws its batch and episode
// seeds from (seed, s) alone, so a run resumed from RLProgress replays the
// remaining steps exactly.
class RLTrainer {
 public:
  // `teacher` is required for the teacher-anchored KL modes and `reference`
  // for uniform_reference.
  RLTrainer(langmodel::PolicyModel& student, const langmodel::Policy* teacher,
            const langmodel::PolicyModel* reference, const world::World& world,
            std::vector<world::QAItem> train_items, RLConfig config, std::uint64_t seed,
            EvalFn validate = {});

  RLStepRecord step();
  bool finished() const;
  bool collapsed() const { return progress_.collapse_step.has_value(); }

  const RLProgress& progress() const { return progress_; }
  void restore(const RLProgress& progress) { progress_ = progress; }
  numerics::Adam& optimizer() { return optimizer_; }
  const RLConfig& config() const { return config_; }

 private:
  langmodel::PolicyModel* student_;
  const langmodel::Policy* teacher_;
  const langmodel::PolicyModel* reference_;
  const world::World* world_;
  std::vector<world::QAItem> items_;
  RLConfig config_;
  std::uint64_t seed_;
  EvalFn validate_;
  numerics::Adam optimizer_;
  RLProgress progress_;
};

}  // namespace dgpo::rl
