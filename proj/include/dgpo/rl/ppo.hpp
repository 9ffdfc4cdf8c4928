#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/model.hpp"
#include "dgpo/numerics/diff_array.hpp"
#include "dgpo/numerics/optimizer.hpp"

namespace dgpo::rl {

// Which KL penalty shapes the terminal reward.
//   selective_teacher: incorrect trajectories only, anchored at the teacher
//   uniform_teacher:   every trajectory, anchored at the teacher
//   uniform_reference: every trajectory, anchored at a frozen phase-start copy
//   none:              answer reward only
enum class KLMode { kSelectiveTeacher, kUniformTeacher, kUniformReference, kNone };

const char* kl_mode_name(KLMode mode);
// Throws std::invalid_argument on an unknown name.
KLMode parse_kl_mode(const std::string& name);

struct PPOConfig {
  double clip_epsilon = 0.2;
  double gamma = 1.0;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  std::size_t ppo_epochs = 1;
  std::size_t minibatch_size = 8;
  double actor_lr = 1e-6;
  double critic_lr = 1e-5;
  double max_grad_norm = 1.0;
  bool whiten_advantages = true;
  double beta = 0.001;
  std::size_t rollout_batch = 64;
  KLMode kl_mode = KLMode::kSelectiveTeacher;
  // Spread the KL penalty over the decision steps instead of the last one.
  bool per_token_kl = false;

  void validate() const;
};

// One trajectory with its per-step advantages and value targets
// (both indexed over the mask-1 positions).
struct PPOSample {
  const episode::Trajectory* trajectory = nullptr;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct PPOLossTerms {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  std::size_t tokens = 0;
};

// -mean_t min(rho_t A_t, clip(rho_t, 1-eps, 1+eps) A_t) + value_coef * mean_t (V_t - R_t)^2
// over the mask-1 positions t, with rho_t = exp(log pi(y_t) - old_logprobs[t]).
// `logits` is [T, V] and `values` is [T]; row t - 1 scores token t.
numerics::DiffArray ppo_loss_from_outputs(const numerics::DiffArray& logits,
                                          const numerics::DiffArray& values,
                                          const PPOSample& sample, double clip_epsilon,
                                          double value_coef, PPOLossTerms* terms = nullptr);

// Subtracts the mean and divides by the standard deviation of every
// advantage in the batch.
void whiten_advantages(std::vector<PPOSample>& batch);

struct PPOUpdateMetrics {
  double loss = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  std::size_t updates = 0;
};

numerics::Adam make_ppo_optimizer(const PPOConfig& cfg);

// Runs ppo_epochs passes of shuffled minibatch updates over `batch`.
PPOUpdateMetrics ppo_update(langmodel::PolicyModel& model, numerics::Adam& optimizer,
                            const std::vector<PPOSample>& batch, const PPOConfig& cfg,
                            std::uint64_t seed);

}  // namespace dgpo::rl
