#include "dgpo/distill/kd.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dgpo/distill/kl.hpp"
#include "dgpo/numerics/ops.hpp"
#include "dgpo/util/hashing.hpp"
#include "dgpo/world/text.hpp"

namespace dgpo::distill {

namespace nx = numerics;
using numerics::DiffArray;

void KDConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("KDConfig: lambda must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("KDConfig: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("KDConfig: learning_rate must be positive");
}

std::vector<const episode::Trajectory*> TGOBatch::retained() const {
  std::vector<const episode::Trajectory*> out;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (!filtered || correct[i]) out.push_back(&trajectories[i]);
  }
  return out;
}

TGOBatch collect_tgos(const langmodel::Policy& teacher, const world::World& world,
                      const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget,
                      bool filter_correct, double temperature, std::uint64_t seed) {
  TGOBatch batch;
  batch.filtered = filter_correct;
  episode::EpisodeOptions opts;
  opts.temperature = temperature;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto traj = episode::run_episode(teacher, world, items[i], budget, opts, util::mix_seed(seed, i));
    const bool ok = world::exact_match(traj.answer, items[i].answer);
    traj.reward = ok ? 1.0 : 0.0;
    batch.correct.push_back(ok);
    batch.trajectories.push_back(std::move(traj));
  }
  return batch;
}

namespace {

struct Selected {
  DiffArray logprobs;  // [m, V]
  std::vector<int> targets;
};

Selected select_decisions(const DiffArray& logits, const episode::Trajectory& traj,
                          std::size_t expected_rows, const char* who) {
  if (logits.rank() != 2 || logits.rows() != traj.tokens.size()) {
    throw std::invalid_argument(std::string(who) + ": logits do not match the trajectory length");
  }
  const auto positions = masked_positions(traj.mask);
  if (positions.empty()) throw std::invalid_argument(std::string(who) + ": trajectory has no mask-1 positions");
  if (positions.size() != expected_rows) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(expected_rows) +
                                " teacher rows for " + std::to_string(positions.size()) +
                                " mask-1 positions");
  }
  if (positions.front() == 0) throw std::invalid_argument(std::string(who) + ": mask[0] must be 0");
  std::vector<std::size_t> rows;
  std::vector<int> targets;
  for (auto t : positions) {
    rows.push_back(t - 1);
    targets.push_back(traj.tokens[t]);
  }
  return {nx::log_softmax(nx::select_rows(logits, rows)), std::move(targets)};
}

constexpr double kLogFloor = -690.0;

}  // namespace

DiffArray kd_loss(const langmodel::PolicyModel& student, const episode::Trajectory& traj,
                  const std::vector<std::vector<double>>& teacher_rows, double lambda, KDTerms* terms) {
  return kd_loss_from_logits(student.forward(traj.tokens).logits, traj, teacher_rows, lambda, terms);
}

DiffArray kd_loss_from_logits(const DiffArray& logits, const episode::Trajectory& traj,
                              const std::vector<std::vector<double>>& teacher_rows, double lambda,
                              KDTerms* terms) {
  auto sel = select_decisions(logits, traj, teacher_rows.size(), "kd_loss");
  const std::size_t m = teacher_rows.size();
  const std::size_t V = sel.logprobs.cols();
  std::vector<double> probs(m * V);
  double neg_entropy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (teacher_rows[i].size() != V) throw std::invalid_argument("kd_loss: teacher row width mismatch");
    for (std::size_t v = 0; v < V; ++v) {
      const double p = std::exp(teacher_rows[i][v]);
      probs[i * V + v] = p;
      if (p > 0.0) neg_entropy += p * teacher_rows[i][v];
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  const DiffArray picked = nx::pick(sel.logprobs, sel.targets);
  const DiffArray ce = nx::scale(nx::sum(picked), -inv_m);
  const DiffArray cross = nx::weighted_sum(nx::reshape(sel.logprobs, {m * V}), probs);
  const DiffArray kl = nx::scale(nx::add_scalar(nx::scale(cross, -1.0), neg_entropy), inv_m);
  if (terms) {
    terms->ce = ce.item();
    terms->kl = kl.item();
    terms->tokens = m;
  }
  if (lambda == 0.0) return ce;
  return nx::add(ce, nx::scale(kl, lambda));
}

DiffArray reverse_kl_loss(const langmodel::PolicyModel& student, const episode::Trajectory& traj,
                          const std::vector<std::vector<double>>& teacher_rows) {
  return reverse_kl_loss_from_logits(student.forward(traj.tokens).logits, traj, teacher_rows);
}

DiffArray reverse_kl_loss_from_logits(const DiffArray& logits, const episode::Trajectory& traj,
                                      const std::vector<std::vector<double>>& teacher_rows) {
  auto sel = select_decisions(logits, traj, teacher_rows.size(), "reverse_kl_loss");
  const std::size_t m = teacher_rows.size();
  const std::size_t V = sel.logprobs.cols();
  std::vector<double> teacher(m * V);
  for (std::size_t i = 0; i < m; ++i) {
    if (teacher_rows[i].size() != V) throw std::invalid_argument("reverse_kl_loss: teacher row width mismatch");
    for (std::size_t v = 0; v < V; ++v) teacher[i * V + v] = std::max(teacher_rows[i][v], kLogFloor);
  }
  const DiffArray lt = DiffArray::constant({m, V}, std::move(teacher));
  const DiffArray ps = nx::exp(sel.logprobs);
  const DiffArray per = nx::mul(ps, nx::sub(sel.logprobs, lt));
  return nx::scale(nx::sum(per), 1.0 / static_cast<double>(m));
}

DiffArray sorted_mean(std::vector<DiffArray> losses) {
  if (losses.empty()) throw std::invalid_argument("sorted_mean: no losses");
  std::stable_sort(losses.begin(), losses.end(),
                   [](const DiffArray& a, const DiffArray& b) { return a.item() < b.item(); });
  DiffArray total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = nx::add(total, losses[i]);
  return nx::scale(total, 1.0 / static_cast<double>(losses.size()));
}

namespace {

std::vector<nx::NamedParameter> actor_parameters(langmodel::PolicyModel& model) {
  std::vector<nx::NamedParameter> out;
  for (auto& p : model.parameters())
    if (p.group == "actor") out.push_back(p);
  return out;
}

}  // namespace

std::vector<KDEpochMetrics> train_cold_start(langmodel::PolicyModel& student,
                                             const langmodel::Policy& teacher, const TGOBatch& tgo,
                                             const KDConfig& cfg, std::uint64_t seed,
                                             const ValidationFn& validate) {
  cfg.validate();
  const auto data = tgo.retained();
  if (data.empty()) {
    throw std::invalid_argument(
        "train_cold_start: no retained teacher trajectories; disable correctness filtering or use a "
        "stronger teacher");
  }
  std::vector<KDEpochMetrics> history;
  if (cfg.epochs == 0) return history;

  auto params = actor_parameters(student);
  nx::Adam opt({0.9, 0.999, 1e-8, {{"actor", cfg.learning_rate}}});
  const double lambda = cfg.effective_lambda();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(util::mix_seed(seed, 0x6b64, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    KDEpochMetrics m;
    m.epoch = epoch + 1;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      nx::zero_grad(params);
      std::vector<DiffArray> losses;
      double ce = 0.0, kl = 0.0;
      for (std::size_t j = start; j < end; ++j) {
        const auto& traj = *data[order[j]];
        KDTerms terms;
        losses.push_back(kd_loss(student, traj, policy_rows(teacher, traj), lambda, &terms));
        ce += terms.ce;
        kl += terms.kl;
      }
      const double n = static_cast<double>(end - start);
      const DiffArray loss = sorted_mean(std::move(losses));
      nx::backward(loss);
      nx::clip_grad_norm(params, cfg.max_grad_norm);
      opt.step(params);
      m.loss += loss.item();
      m.ce += ce / n;
      m.kl += kl / n;
      ++m.updates;
    }
    const double u = static_cast<double>(m.updates);
    m.loss /= u;
    m.ce /= u;
    m.kl /= u;
    if (validate) m.val_em = validate(student);
    history.push_back(m);
    if (cfg.em_threshold && m.val_em && *m.val_em >= *cfg.em_threshold) break;
  }
  return history;
}

GKDStepMetrics gkd_step(langmodel::PolicyModel& student, nx::Adam& optimizer,
                        const langmodel::Policy& teacher, const world::World& world,
                        const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget,
                        double max_grad_norm, std::uint64_t seed) {
  if (items.empty()) throw std::invalid_argument("gkd_step: empty batch");
  const langmodel::ModelPolicy policy(student);
  episode::EpisodeOptions opts;
  std::vector<episode::Trajectory> trajs;
  GKDStepMetrics metrics;
  for (std::size_t i = 0; i < items.size(); ++i) {
    trajs.push_back(episode::run_episode(policy, world, items[i], budget, opts, util::mix_seed(seed, i)));
    metrics.mean_reward += world::exact_match(trajs.back().answer, items[i].answer) ? 1.0 : 0.0;
  }
  metrics.mean_reward /= static_cast<double>(items.size());

  auto params = actor_parameters(student);
  nx::zero_grad(params);
  std::vector<DiffArray> losses;
  for (const auto& traj : trajs) losses.push_back(reverse_kl_loss(student, traj, policy_rows(teacher, traj)));
  const DiffArray loss = sorted_mean(std::move(losses));
  nx::backward(loss);
  metrics.loss = loss.item();
  metrics.grad_norm = nx::clip_grad_norm(params, max_grad_norm);
  optimizer.step(params);
  return metrics;
}

}  // namespace dgpo::distill
