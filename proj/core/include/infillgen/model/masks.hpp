// SPDX-License-Identifier: Apache-2.0
#pragma once

// Additive attention masks for the three flows. Entries are 0 ("can attend")
// or kernels::kMaskSentinel ("cannot attend").
//
// Key layout for the generation flows is [X; A] where X = [S'; T'] has
// n = |S'| + |T'| rows and A is that flow's [ATTN] sequence; A slot i sits at
// key column n + i.

#include <iosfwd>

#include "infillgen/spans/span_vocab.hpp"
#include "infillgen/tensor/tensor.hpp"

namespace infillgen::model {

struct MaskLayout {
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  spans::SpanBoundaries spans;  // over T'; may be empty when the span flow is unused
};

struct FlowMasks {
  tensor::Tensor contextual;  // n x n
  tensor::Tensor word;        // m x (n + m)
  tensor::Tensor span;        // m x (n + m)
};

/// Throws UsageError when the span boundaries do not tile the target.
FlowMasks build_masks(const MaskLayout& layout);

/// Which query streams a forward pass evaluates.
struct FlowSelection {
  bool word = true;
  bool span = true;
};

/// One square mask over the stacked rows [X; A_W; A_S] (flows not selected
/// are omitted). Cross-flow blocks are masked, so a single masked softmax over
/// these rows equals running the three attentions separately.
tensor::Tensor joint_mask(const MaskLayout& layout, FlowSelection flows);

/// 0/1 grid (1 = can attend), one row per query, as text.
void write_mask_grid(std::ostream& out, const tensor::Tensor& mask);

}  // namespace infillgen::model
