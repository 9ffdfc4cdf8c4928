#include "dgpo/numerics/optimizer.hpp"

#include <cmath>

namespace dgpo::numerics {

void Adam::step(std::vector<NamedParameter>& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw GradientError("Adam::step: parameter list changed size");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value.has_grad()) {
      throw GradientError("Adam::step: parameter '" + params[i].name + "' has no gradient");
    }
    if (m_[i].size() != params[i].value.size()) {
      throw GradientError("Adam::step: moment buffer shape mismatch for '" + params[i].name + "'");
    }
    if (!config_.group_rates.count(params[i].group)) {
      throw GradientError("Adam::step: no learning rate for group '" + params[i].group + "'");
    }
  }

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double lr = config_.group_rates.at(params[i].group);
    auto w = params[i].value.mutable_values();
    auto g = params[i].value.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

void zero_grad(std::vector<NamedParameter>& params) {
  for (auto& p : params) p.value.zero_grad();
}

double clip_grad_norm(std::vector<NamedParameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      if (!p.value.has_grad()) continue;
      for (double& g : p.value.mutable_grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace dgpo::numerics
