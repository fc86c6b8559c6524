// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable primitives recorded on a Graph. Inputs are rank-2 unless
// stated; "row-broadcast" means the rhs is a single row whose width equals
// lhs.cols() and is applied to every lhs row.

#include <cstdint>
#include <span>
#include <vector>

#include "infillgen/tensor/graph.hpp"
#include "infillgen/tensor/kernels.hpp"

namespace infillgen::tensor {

Var add(Var a, Var b);  // same shape or row-broadcast b
Var mul(Var a, Var b);  // same shape or row-broadcast b
Var scale(Var a, double factor);
Var sum(Var a);

Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
Var transpose(Var a);

/// axis 0 stacks rows, axis 1 stacks columns.
Var concat(std::span<const Var> parts, std::size_t axis);
/// Half-open [begin, end) along `axis`.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);

/// Row normalisation without affine terms; combine with mul/add for gain/bias.
Var layer_norm(Var x, double eps = 1e-12);
Var gelu(Var x);

/// Rows of `table` selected by `ids`; backward scatter-adds into the table.
Var embedding_lookup(Var table, std::vector<std::uint32_t> ids);

/// Inverted dropout driven by an explicit seed. rate == 0 returns `x`.
Var dropout(Var x, double rate, std::uint64_t seed);

struct SoftmaxOptions {
  double sentinel = kernels::kMaskSentinel;
  /// When false, a row with every key masked raises UsageError.
  bool allow_fully_masked = true;
};

/// softmax(logits + mask) per row; masked keys receive exactly 0. `mask` is a
/// constant (never differentiated), same shape as logits or a single row.
Var softmax_masked(Var logits, const Tensor& mask, SoftmaxOptions options = {});

/// Mean label-smoothed negative log likelihood over rows not flagged in
/// `ignore`. The smoothed target puts (1 - smoothing) on the gold id plus
/// smoothing / V spread uniformly over all V classes.
Var cross_entropy_label_smoothed(Var logits, std::vector<std::uint32_t> targets,
                                 double smoothing, std::vector<std::uint8_t> ignore = {});

}  // namespace infillgen::tensor
