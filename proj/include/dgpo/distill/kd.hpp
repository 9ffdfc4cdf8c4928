#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/model.hpp"
#include "dgpo/langmodel/policy.hpp"
#include "dgpo/numerics/diff_array.hpp"
#include "dgpo/numerics/optimizer.hpp"
#include "dgpo/world/world.hpp"

namespace dgpo::distill {

enum class KDMode { kKD, kSeqKD, kGKD };

struct KDConfig {
  double lambda = 1.0;
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double max_grad_norm = 1.0;
  bool filter_correct = true;
  KDMode mode = KDMode::kKD;
  // Optional early stop once validation EM reaches this value.
  std::optional<double> em_threshold;

  void validate() const;
  // Weight on the KL term actually used by the selected mode.
  double effective_lambda() const { return mode == KDMode::kSeqKD ? 0.0 : lambda; }
};

struct TGOBatch {
  std::vector<episode::Trajectory> trajectories;
  std::vector<bool> correct;
  bool filtered = true;

  // Trajectories used for training: the correct ones when filtered, else all.
  std::vector<const episode::Trajectory*> retained() const;
};

// One teacher episode per QA item (temperature 0 is greedy).
TGOBatch collect_tgos(const langmodel::Policy& teacher, const world::World& world,
                      const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget,
                      bool filter_correct, double temperature, std::uint64_t seed);

struct KDTerms {
  double ce = 0.0;  // token-mean cross-entropy
  double kl = 0.0;  // token-mean D_KL(teacher || student)
  std::size_t tokens = 0;
};

// Mean over mask-1 positions of CE(student, next token) + lambda * KL(teacher || student).
// `teacher_rows[i]` is the teacher's log-probability row at the i-th mask-1 position.
numerics::DiffArray kd_loss(const langmodel::PolicyModel& student, const episode::Trajectory& traj,
                            const std::vector<std::vector<double>>& teacher_rows, double lambda,
                            KDTerms* terms = nullptr);

// Same loss on precomputed logits [T, V]; row t predicts tokens[t + 1].
numerics::DiffArray kd_loss_from_logits(const numerics::DiffArray& logits,
                                        const episode::Trajectory& traj,
                                        const std::vector<std::vector<double>>& teacher_rows,
                                        double lambda, KDTerms* terms = nullptr);

// Mean over mask-1 positions of D_KL(student || teacher).
numerics::DiffArray reverse_kl_loss(const langmodel::PolicyModel& student,
                                    const episode::Trajectory& traj,
                                    const std::vector<std::vector<double>>& teacher_rows);
numerics::DiffArray reverse_kl_loss_from_logits(const numerics::DiffArray& logits,
                                                const episode::Trajectory& traj,
                                                const std::vector<std::vector<double>>& teacher_rows);

// Sum of scalar losses in ascending order of value, divided by the count.
numerics::DiffArray sorted_mean(std::vector<numerics::DiffArray> losses);

struct KDEpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  std::size_t updates = 0;
  std::optional<double> val_em;
};

using ValidationFn = std::function<double(const langmodel::PolicyModel&)>;

// Minibatch distillation on the retained TGOs; updates only the actor group.
std::vector<KDEpochMetrics> train_cold_start(langmodel::PolicyModel& student,
                                             const langmodel::Policy& teacher, const TGOBatch& tgo,
                                             const KDConfig& cfg, std::uint64_t seed,
                                             const ValidationFn& validate = {});

struct GKDStepMetrics {
  double loss = 0.0;
  double grad_norm = 0.0;
  double mean_reward = 0.0;
};

// One on-policy distillation update: samples student episodes on `items`,
// minimises mean per-token reverse KL to the teacher over mask-1 positions.
GKDStepMetrics gkd_step(langmodel::PolicyModel& student, numerics::Adam& optimizer,
                        const langmodel::Policy& teacher, const world::World& world,
                        const std::vector<world::QAItem>& items,
                        const episode::EpisodeBudget& budget, double max_grad_norm,
                        std::uint64_t seed);

}  // namespace dgpo::distill
