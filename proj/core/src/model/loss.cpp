// SPDX-License-Identifier: Apache-2.0
#include "infillgen/model/loss.hpp"

#include "infillgen/error.hpp"
#include "infillgen/tensor/ops.hpp"

namespace infillgen::model {

FlatTargets flatten_targets(const data::Batch& batch) {
  FlatTargets flat;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t i = 0; i < batch.target_lengths[b]; ++i) {
      flat.targets.push_back(batch.targets.at(b, i));
      const bool counted = batch.loss_mask.at(b, i) != 0;
      flat.ignore.push_back(counted ? 0 : 1);
      flat.counted += counted ? 1 : 0;
    }
  }
  return flat;
}

LossBreakdown compute_loss(const ForwardResult& forward, const FlatTargets& targets, double lambda,
                           double smoothing) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("compute_loss: lambda must be in [0, 1]");
  if (targets.counted == 0) throw UsageError("compute_loss: empty loss mask");
  if (!forward.has_word && lambda != 0.0) {
    throw UsageError("compute_loss: word flow not evaluated but lambda > 0");
  }
  if (!forward.has_span && lambda != 1.0) {
    throw UsageError("compute_loss: span flow not evaluated but lambda < 1");
  }

  LossBreakdown out;
  tensor::Var word, span;
  if (forward.has_word) {
    word = tensor::cross_entropy_label_smoothed(forward.word_logits, targets.targets, smoothing,
                                                targets.ignore);
    out.word_loss = word.value().item();
  }
  if (forward.has_span) {
    span = tensor::cross_entropy_label_smoothed(forward.span_logits, targets.targets, smoothing,
                                                targets.ignore);
    out.span_loss = span.value().item();
  }
  if (forward.has_word && forward.has_span) {
    out.total_var = tensor::add(tensor::scale(word, lambda), tensor::scale(span, 1.0 - lambda));
  } else {
    out.total_var = forward.has_word ? word : span;
  }
  out.total = out.total_var.value().item();
  return out;
}

}  // namespace infillgen::model
