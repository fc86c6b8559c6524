// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared-parameter transformer running the contextual flow over X = [S'; T']
// and the word-by-word / span-by-span [ATTN] flows on top of it.
//
// All rows of one example are stacked as [X; A_W; A_S] and pass through each
// block together: one LayerNorm/projection/FFN per block, and one masked
// attention per example and head using joint_mask(). Because cross-flow
// blocks of that mask are zero-probability, the contextual rows never read
// the [ATTN] rows, and every [ATTN] query reads X keys/values of the same
// layer plus only itself.

#include <cstdint>
#include <span>
#include <vector>

#include "infillgen/data/example.hpp"
#include "infillgen/model/masks.hpp"
#include "infillgen/model/params.hpp"
#include "infillgen/tensor/graph.hpp"

namespace infillgen::model {

/// Row bookkeeping for one example inside the stacked hidden matrix.
struct ExampleRows {
  std::size_t offset = 0;  // first row of this example
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  bool word = false;
  bool span = false;

  std::size_t context_rows() const noexcept { return source_len + target_len; }
  std::size_t total_rows() const noexcept {
    return context_rows() + (word ? target_len : 0) + (span ? target_len : 0);
  }
  std::size_t word_row(std::size_t i) const noexcept { return offset + context_rows() + i; }
  std::size_t span_row(std::size_t i) const noexcept {
    return offset + context_rows() + (word ? target_len : 0) + i;
  }
};

/// Last-layer attention probabilities: [example][head] -> joint-row matrix.
using AttentionCapture = std::vector<std::vector<tensor::Tensor>>;

struct ForwardOptions {
  FlowSelection flows{};
  /// Enables dropout at config.dropout.
  bool training = false;
  std::uint64_t dropout_seed = 0;
  /// Re-roots the graph at the summed input embeddings, so gradients with
  /// respect to individual input rows can be read from `embeddings`.
  bool embeddings_leaf = false;
  AttentionCapture* attention_capture = nullptr;
  /// Receives the stacked states after the embeddings (index 0) and after
  /// every block, before the final norm.
  std::vector<tensor::Var>* layer_states = nullptr;
};

struct ForwardResult {
  tensor::Var embeddings;
  tensor::Var hidden;       // final-norm output, every row
  tensor::Var word_logits;  // sum(|T'|) x V, examples in batch order; valid if has_word
  tensor::Var span_logits;  // same layout; valid if has_span
  bool has_word = false;
  bool has_span = false;
  std::vector<ExampleRows> rows;
  /// First logits row of each example.
  std::vector<std::size_t> target_offsets;
};

/// Runs the selected flows. `params` must come from bind_parameters(). Throws
/// UsageError when a position id reaches config.max_positions or a token id
/// falls outside the vocabulary.
ForwardResult forward_multiflow(tensor::Graph& graph, std::span<const tensor::Var> params,
                                const ModelParams& model, const data::Batch& batch,
                                const ForwardOptions& options = {});

/// Contextual flow only; `layer_states` (if given) receives X^(0..L).
ForwardResult forward_contextual(tensor::Graph& graph, std::span<const tensor::Var> params,
                                 const ModelParams& model, const data::Batch& batch,
                                 std::vector<tensor::Var>* layer_states = nullptr);

}  // namespace infillgen::model
