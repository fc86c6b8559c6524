// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "infillgen/data/example.hpp"
#include "infillgen/model/multiflow.hpp"
#include "infillgen/tensor/graph.hpp"

namespace infillgen::model {

/// total = lambda * word_loss + (1 - lambda) * span_loss.
struct LossBreakdown {
  double word_loss = 0.0;
  double span_loss = 0.0;
  double total = 0.0;
  /// Differentiable total.
  tensor::Var total_var;
};

/// Clean targets and loss mask flattened in logits-row order.
struct FlatTargets {
  std::vector<std::uint32_t> targets;
  std::vector<std::uint8_t> ignore;  // 1 where no loss is taken
  std::size_t counted = 0;
};

FlatTargets flatten_targets(const data::Batch& batch);

/// Label-smoothed NLL of the clean targets under each flow's logits. When a
/// flow was not evaluated its loss is reported as 0, which requires its
/// weight to be 0. Throws UsageError on an empty loss mask or lambda outside
/// [0, 1].
LossBreakdown compute_loss(const ForwardResult& forward, const FlatTargets& targets,
                           double lambda, double smoothing);

}  // namespace infillgen::model
