// SPDX-License-Identifier: Apache-2.0
#include "infillgen/model/masks.hpp"

#include <ostream>

#include "infillgen/error.hpp"
#include "infillgen/tensor/kernels.hpp"

namespace infillgen::model {

using tensor::Shape;
using tensor::Tensor;
using tensor::kernels::kMaskSentinel;

namespace {

void check_spans(const MaskLayout& layout) {
  if (layout.spans.length != layout.target_len) {
    throw UsageError("build_masks: span boundaries cover " + std::to_string(layout.spans.length) +
                     " tokens but the target has " + std::to_string(layout.target_len));
  }
  layout.spans.validate(0);
}

}  // namespace

FlowMasks build_masks(const MaskLayout& layout) {
  check_spans(layout);
  const std::size_t s = layout.source_len;
  const std::size_t m = layout.target_len;
  const std::size_t n = s + m;
  FlowMasks masks{Tensor(Shape{n, n}, kMaskSentinel), Tensor(Shape{m, n + m}, kMaskSentinel),
                  Tensor(Shape{m, n + m}, kMaskSentinel)};

  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t visible = q < s ? s : q + 1;  // source: all source; target i: source + t_<=i
    for (std::size_t k = 0; k < visible; ++k) masks.contextual.at(q, k) = 0.0;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < s + i; ++k) masks.word.at(i, k) = 0.0;  // source + t_<i
    masks.word.at(i, n + i) = 0.0;                                      // own [ATTN]
  }
  for (std::size_t span = 0; span < layout.spans.span_count(); ++span) {
    const std::size_t begin = layout.spans.starts[span];
    for (std::size_t j = begin; j < layout.spans.span_end(span); ++j) {
      for (std::size_t k = 0; k < s + begin; ++k) masks.span.at(j, k) = 0.0;  // source + t_<b
      masks.span.at(j, n + j) = 0.0;
    }
  }
  return masks;
}

Tensor joint_mask(const MaskLayout& layout, FlowSelection flows) {
  const std::size_t s = layout.source_len;
  const std::size_t m = layout.target_len;
  const std::size_t n = s + m;
  MaskLayout effective = layout;
  if (!flows.span) effective.spans = spans::SpanBoundaries::unigrams(m);
  const FlowMasks masks = build_masks(effective);

  const std::size_t word_rows = flows.word ? m : 0;
  const std::size_t span_rows = flows.span ? m : 0;
  const std::size_t total = n + word_rows + span_rows;
  Tensor joint(Shape{total, total}, kMaskSentinel);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k) joint.at(q, k) = masks.contextual.at(q, k);

  const auto place = [&](const Tensor& flow_mask, std::size_t row_offset) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < n; ++k) joint.at(row_offset + i, k) = flow_mask.at(i, k);
      for (std::size_t a = 0; a < m; ++a) joint.at(row_offset + i, row_offset + a) = flow_mask.at(i, n + a);
    }
  };
  if (flows.word) place(masks.word, n);
  if (flows.span) place(masks.span, n + word_rows);
  return joint;
}

void write_mask_grid(std::ostream& out, const Tensor& mask) {
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      if (c) out << ' ';
      out << (tensor::kernels::is_masked(mask.at(r, c)) ? '0' : '1');
    }
    out << '\n';
  }
}

}  // namespace infillgen::model
