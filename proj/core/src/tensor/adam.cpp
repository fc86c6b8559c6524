// SPDX-License-Identifier: Apache-2.0
#include "infillgen/tensor/adam.hpp"

#include <cmath>
#include <string>

#include "infillgen/error.hpp"

namespace infillgen::tensor {

void OptimizerConfig::validate() const {
  if (!(0.0 < beta1 && beta1 < beta2 && beta2 < 1.0)) {
    throw UsageError("optimizer: require 0 < beta1 < beta2 < 1");
  }
  if (!(epsilon > 0.0)) throw UsageError("optimizer: epsilon must be positive");
  if (!(peak_lr >= 0.0)) throw UsageError("optimizer: peak_lr must be non-negative");
  if (warmup_steps > total_steps) throw UsageError("optimizer: warmup_steps exceeds total_steps");
}

double learning_rate(const OptimizerConfig& config, std::uint64_t step) {
  if (step == 0) throw UsageError("learning_rate: steps are numbered from 1");
  if (step <= config.warmup_steps) {
    return config.peak_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  if (step >= config.total_steps) return 0.0;
  const double remaining = static_cast<double>(config.total_steps - step);
  const double span = static_cast<double>(config.total_steps - config.warmup_steps);
  return config.peak_lr * remaining / span;
}

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState state;
  for (const Tensor& p : params) {
    state.first_moment.push_back(Tensor::zeros_like(p));
    state.second_moment.push_back(Tensor::zeros_like(p));
  }
  return state;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const OptimizerConfig& config, std::uint64_t step) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].shape() ||
        state.first_moment[k].shape() != params[k].shape() ||
        state.second_moment[k].shape() != params[k].shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(k) + " " +
                       shape_to_string(params[k].shape()));
    }
  }
  const double lr = learning_rate(config, step);
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* p = params[k].raw();
    const double* g = grads[k].raw();
    double* m = state.first_moment[k].raw();
    double* v = state.second_moment[k].raw();
    for (std::size_t i = 0; i < params[k].numel(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace infillgen::tensor
