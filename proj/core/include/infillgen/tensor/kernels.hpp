// SPDX-License-Identifier: Apache-2.0
#pragma once

// Graph-free numeric kernels. The autodiff ops in ops.hpp call these for
// their forward values, and the incremental decoder calls them directly.
//
// Every kernel computes each output row from the matching input row(s) with a
// fixed accumulation order, so a row's value never depends on how many other
// rows share the call.

#include <cstdint>
#include <span>

#include "infillgen/tensor/tensor.hpp"

namespace infillgen::tensor::kernels {

/// Default additive value standing in for -inf in attention masks.
inline constexpr double kMaskSentinel = -1e9;

/// True when an additive mask entry means "cannot attend".
inline bool is_masked(double mask_value, double sentinel = kMaskSentinel) noexcept {
  return mask_value <= sentinel;
}

/// op(a) * op(b) for rank-2 inputs.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);
Tensor transpose(const Tensor& a);

/// Adds `bias` (length = a.cols()) to every row.
void add_row_bias(Tensor& a, const Tensor& bias);

/// Row-wise (x - mean) / sqrt(var + eps), population variance.
Tensor layer_norm(const Tensor& x, double eps);
/// layer_norm followed by per-column gain and bias.
Tensor layer_norm_affine(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Exact GELU: x * Phi(x).
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;
Tensor gelu(const Tensor& x);

struct SoftmaxResult {
  Tensor probs;
  /// Indices of rows whose keys were all masked; those rows are all-zero.
  std::vector<std::size_t> fully_masked_rows;
};

/// Row softmax of logits + mask. Masked keys get probability exactly 0.
SoftmaxResult softmax_masked(const Tensor& logits, const Tensor& mask,
                             double sentinel = kMaskSentinel);

/// Row-wise log-softmax, computed in a numerically stable way.
Tensor log_softmax(const Tensor& logits);

/// Gathers rows of `table` in `ids` order.
Tensor gather_rows(const Tensor& table, std::span<const std::uint32_t> ids);

}  // namespace infillgen::tensor::kernels
