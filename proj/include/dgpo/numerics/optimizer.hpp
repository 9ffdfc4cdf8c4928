#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dgpo/numerics/diff_array.hpp"

namespace dgpo::numerics {

struct NamedParameter {
  std::string name;
  std::string group;  // optimizer group label, e.g. "actor" / "critic"
  DiffArray value;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, double> group_rates;  // group label -> learning rate
};

// Adam with per-group learning rates. Moment buffers are keyed by parameter
// position in the list passed to step(); that list must keep the same order
// and shapes for the lifetime of the optimizer.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(std::move(config)) {}

  // Applies one update using the gradients currently held by `params`.
  // Throws GradientError if a parameter has no gradient buffer or its group
  // has no configured rate.
  void step(std::vector<NamedParameter>& params);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_rate(const std::string& group, double rate) { config_.group_rates[group] = rate; }

  // Serialization support.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

void zero_grad(std::vector<NamedParameter>& params);

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the norm before scaling.
double clip_grad_norm(std::vector<NamedParameter>& params, double max_norm);

}  // namespace dgpo::numerics
