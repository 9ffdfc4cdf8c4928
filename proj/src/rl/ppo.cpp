#include "dgpo/rl/ppo.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "dgpo/distill/kd.hpp"
#include "dgpo/distill/kl.hpp"
#include "dgpo/numerics/ops.hpp"
#include "dgpo/util/hashing.hpp"

namespace dgpo::rl {

namespace nx = numerics;
using numerics::DiffArray;

const char* kl_mode_name(KLMode mode) {
  switch (mode) {
    case KLMode::kSelectiveTeacher: return "selective_teacher";
    case KLMode::kUniformTeacher: return "uniform_teacher";
    case KLMode::kUniformReference: return "uniform_reference";
    case KLMode::kNone: return "none";
  }
  return "unknown";
}

KLMode parse_kl_mode(const std::string& name) {
  for (auto m : {KLMode::kSelectiveTeacher, KLMode::kUniformTeacher, KLMode::kUniformReference, KLMode::kNone})
    if (name == kl_mode_name(m)) return m;
  throw std::invalid_argument("unknown kl_mode '" + name +
                              "' (expected selective_teacher, uniform_teacher, uniform_reference or none)");
}

void PPOConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("PPOConfig: clip_epsilon must be in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("PPOConfig: gamma must be in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("PPOConfig: gae_lambda must be in [0, 1]");
  if (!(value_coef >= 0.0)) throw std::invalid_argument("PPOConfig: value_coef must be >= 0");
  if (ppo_epochs == 0) throw std::invalid_argument("PPOConfig: ppo_epochs must be positive");
  if (minibatch_size == 0) throw std::invalid_argument("PPOConfig: minibatch_size must be positive");
  if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0)) throw std::invalid_argument("PPOConfig: learning rates must be >= 0");
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("PPOConfig: max_grad_norm must be positive");
  if (!(beta >= 0.0)) throw std::invalid_argument("PPOConfig: beta must be >= 0");
  if (rollout_batch == 0) throw std::invalid_argument("PPOConfig: rollout_batch must be positive");
}

DiffArray ppo_loss_from_outputs(const DiffArray& logits, const DiffArray& values,
                                const PPOSample& sample, double clip_epsilon, double value_coef,
                                PPOLossTerms* terms) {
  const auto& traj = *sample.trajectory;
  const std::size_t T = traj.tokens.size();
  if (logits.rank() != 2 || logits.rows() != T || values.size() != T) {
    throw std::invalid_argument("ppo_loss: model outputs do not match the trajectory length");
  }
  const auto positions = distill::masked_positions(traj.mask);
  const std::size_t n = positions.size();
  if (n == 0) throw std::invalid_argument("ppo_loss: trajectory has no mask-1 positions");
  if (positions.front() == 0) throw std::invalid_argument("ppo_loss: mask[0] must be 0");
  if (sample.advantages.size() != n || sample.returns.size() != n) {
    throw std::invalid_argument("ppo_loss: advantage/return length does not match mask-1 count");
  }
  std::vector<std::size_t> rows;
  std::vector<int> targets;
  std::vector<double> old;
  for (auto t : positions) {
    rows.push_back(t - 1);
    targets.push_back(traj.tokens[t]);
    old.push_back(traj.old_logprobs[t]);
  }
  const DiffArray new_lp = nx::pick(nx::log_softmax(nx::select_rows(logits, rows)), targets);
  const DiffArray ratio = nx::exp(nx::sub(new_lp, DiffArray::constant({n}, old)));
  const DiffArray adv = DiffArray::constant({n}, sample.advantages);
  const DiffArray surr1 = nx::mul(ratio, adv);
  const DiffArray surr2 = nx::mul(nx::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon), adv);
  const DiffArray surrogate = nx::mean(nx::minimum(surr1, surr2));

  const DiffArray v = nx::reshape(nx::select_rows(nx::reshape(values, {T, 1}), rows), {n});
  const DiffArray value_loss =
      nx::mean(nx::square(nx::sub(v, DiffArray::constant({n}, sample.returns))));

  if (terms) {
    terms->surrogate = surrogate.item();
    terms->value_loss = value_loss.item();
    double clipped = 0.0, kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(ratio.at(i) - 1.0) > clip_epsilon) clipped += 1.0;
      kl += old[i] - new_lp.at(i);
    }
    terms->clip_fraction = clipped / static_cast<double>(n);
    terms->approx_kl = kl / static_cast<double>(n);
    terms->tokens = n;
  }
  const DiffArray policy = nx::scale(surrogate, -1.0);
  if (value_coef == 0.0) return policy;
  return nx::add(policy, nx::scale(value_loss, value_coef));
}

void whiten_advantages(std::vector<PPOSample>& batch) {
  double sum = 0.0, count = 0.0;
  for (const auto& s : batch)
    for (double a : s.advantages) {
      sum += a;
      count += 1.0;
    }
  if (count == 0.0) return;
  const double mu = sum / count;
  double var = 0.0;
  for (const auto& s : batch)
    for (double a : s.advantages) var += (a - mu) * (a - mu);
  const double sd = std::sqrt(var / count);
  for (auto& s : batch)
    for (double& a : s.advantages) a = (a - mu) / (sd + 1e-8);
}

nx::Adam make_ppo_optimizer(const PPOConfig& cfg) {
  return nx::Adam({0.9, 0.999, 1e-8, {{"actor", cfg.actor_lr}, {"critic", cfg.critic_lr}}});
}

PPOUpdateMetrics ppo_update(langmodel::PolicyModel& model, nx::Adam& optimizer,
                            const std::vector<PPOSample>& batch, const PPOConfig& cfg,
                            std::uint64_t seed) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("ppo_update: empty batch");
  PPOUpdateMetrics metrics;
  auto& params = model.parameters();
  for (std::size_t epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::vector<std::size_t> order(batch.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(util::mix_seed(seed, 0x70706f, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch_size);
      nx::zero_grad(params);
      std::vector<DiffArray> losses;
      PPOLossTerms acc;
      for (std::size_t j = start; j < end; ++j) {
        const auto& sample = batch[order[j]];
        const auto out = model.forward(sample.trajectory->tokens);
        PPOLossTerms t;
        losses.push_back(
            ppo_loss_from_outputs(out.logits, out.values, sample, cfg.clip_epsilon, cfg.value_coef, &t));
        acc.surrogate += t.surrogate;
        acc.value_loss += t.value_loss;
        acc.clip_fraction += t.clip_fraction;
        acc.approx_kl += t.approx_kl;
      }
      const double k = static_cast<double>(end - start);
      const DiffArray loss = distill::sorted_mean(std::move(losses));
      nx::backward(loss);
      metrics.grad_norm += nx::clip_grad_norm(params, cfg.max_grad_norm);
      optimizer.step(params);
      metrics.loss += loss.item();
      metrics.surrogate += acc.surrogate / k;
      metrics.value_loss += acc.value_loss / k;
      metrics.clip_fraction += acc.clip_fraction / k;
      metrics.approx_kl += acc.approx_kl / k;
      ++metrics.updates;
    }
  }
  const double u = static_cast<double>(metrics.updates);
  metrics.loss /= u;
  metrics.surrogate /= u;
  metrics.value_loss /= u;
  metrics.clip_fraction /= u;
  metrics.approx_kl /= u;
  metrics.grad_norm /= u;
  return metrics;
}

}  // namespace dgpo::rl
