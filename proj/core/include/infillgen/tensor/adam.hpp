// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "infillgen/tensor/tensor.hpp"

namespace infillgen::tensor {

/// Adam hyperparameters plus a linear warmup / linear decay schedule.
struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-9;
  double peak_lr = 5e-5;
  std::uint64_t warmup_steps = 4000;
  std::uint64_t total_steps = 400000;

  /// Throws UsageError unless 0 < beta1 < beta2 < 1, epsilon > 0,
  /// warmup_steps <= total_steps.
  void validate() const;
};

/// peak * step / warmup while step <= warmup, then linear decay reaching zero
/// at total_steps. Step numbering starts at 1.
double learning_rate(const OptimizerConfig& config, std::uint64_t step);

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState zeros_like(std::span<const Tensor> params);
};

/// One bias-corrected Adam update, in place, using learning_rate(config, step).
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const OptimizerConfig& config, std::uint64_t step);

}  // namespace infillgen::tensor
