// SPDX-License-Identifier: Apache-2.0
#include "infillgen/model/multiflow.hpp"

#include <cmath>

#include "infillgen/error.hpp"
#include "infillgen/random.hpp"
#include "infillgen/tensor/ops.hpp"

namespace infillgen::model {

using tensor::Graph;
using tensor::Tensor;
using tensor::Var;

namespace {

Var affine_norm(Var x, Var gain, Var bias, double eps) {
  return tensor::add(tensor::mul(tensor::layer_norm(x, eps), gain), bias);
}

Var linear(Var x, Var weight, Var bias) { return tensor::add(tensor::matmul(x, weight), bias); }

struct RowIds {
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> positions;
  std::vector<std::uint32_t> segments;
};

RowIds collect_rows(const data::Batch& batch, const ModelConfig& config, FlowSelection flows,
                    std::vector<ExampleRows>& rows) {
  RowIds ids;
  std::size_t offset = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ExampleRows r;
    r.offset = offset;
    r.source_len = batch.source_lengths[b];
    r.target_len = batch.target_lengths[b];
    r.word = flows.word;
    r.span = flows.span;
    for (std::size_t i = 0; i < r.context_rows(); ++i) {
      ids.tokens.push_back(batch.tokens.at(b, i));
      ids.positions.push_back(batch.positions.at(b, i));
      ids.segments.push_back(batch.segments.at(b, i));
    }
    const auto add_queries = [&](const data::IdMatrix& queries) {
      for (std::size_t i = 0; i < r.target_len; ++i) {
        ids.tokens.push_back(queries.at(b, i));
        ids.positions.push_back(batch.query_positions.at(b, i));
        ids.segments.push_back(1);
      }
    };
    if (flows.word) add_queries(batch.word_queries);
    if (flows.span) add_queries(batch.span_queries);
    offset += r.total_rows();
    rows.push_back(r);
  }
  for (std::uint32_t p : ids.positions) {
    if (p >= config.max_positions) {
      throw UsageError("forward: position " + std::to_string(p) + " exceeds max_positions " +
                       std::to_string(config.max_positions));
    }
  }
  for (std::uint32_t t : ids.tokens) {
    if (t >= config.vocab_size) {
      throw UsageError("forward: token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(config.vocab_size));
    }
  }
  for (std::uint32_t s : ids.segments) {
    if (s > 1) throw UsageError("forward: segment ids must be 0 or 1");
  }
  return ids;
}

}  // namespace

ForwardResult forward_multiflow(Graph& graph, std::span<const Var> params, const ModelParams& model,
                                const data::Batch& batch, const ForwardOptions& options) {
  const ModelConfig& config = model.config;
  if (params.size() != model.values.size()) {
    throw UsageError("forward: expected " + std::to_string(model.values.size()) +
                     " bound parameters, got " + std::to_string(params.size()));
  }
  if (batch.size() == 0) throw UsageError("forward: empty batch");
  const FlowSelection flows = options.flows;

  ForwardResult result;
  result.has_word = flows.word;
  result.has_span = flows.span;
  RowIds ids = collect_rows(batch, config, flows, result.rows);

  std::vector<Tensor> masks;
  masks.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    MaskLayout layout{batch.source_lengths[b], batch.target_lengths[b], batch.examples[b].spans};
    masks.push_back(joint_mask(layout, flows));
  }

  Var h = tensor::add(tensor::add(tensor::embedding_lookup(params[model.token_embedding], ids.tokens),
                                  tensor::embedding_lookup(params[model.position_embedding],
                                                           ids.positions)),
                      tensor::embedding_lookup(params[model.segment_embedding], ids.segments));
  if (options.embeddings_leaf) h = graph.leaf(h.value(), true);
  result.embeddings = h;

  std::uint64_t dropout_site = 0;
  const auto maybe_dropout = [&](Var x) {
    if (!options.training || config.dropout == 0.0) return x;
    return tensor::dropout(x, config.dropout, derive_seed(options.dropout_seed, dropout_site++));
  };
  h = maybe_dropout(h);
  if (options.layer_states) options.layer_states->push_back(h);

  const std::size_t hidden = config.hidden;
  const std::size_t head_dim = config.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim));
  if (options.attention_capture) options.attention_capture->assign(batch.size(), {});

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LayerSlots& s = model.layers[l];
    const bool last = l + 1 == model.layers.size();
    Var normed = affine_norm(h, params[s.attn_norm_gain], params[s.attn_norm_bias],
                             config.layer_norm_eps);
    Var qkv = linear(normed, params[s.qkv_weight], params[s.qkv_bias]);

    std::vector<Var> per_example;
    per_example.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const ExampleRows& r = result.rows[b];
      Var block = tensor::slice(qkv, 0, r.offset, r.offset + r.total_rows());
      std::vector<Var> heads;
      heads.reserve(config.heads);
      for (std::size_t a = 0; a < config.heads; ++a) {
        const std::size_t c0 = a * head_dim;
        Var q = tensor::slice(block, 1, c0, c0 + head_dim);
        Var k = tensor::slice(block, 1, hidden + c0, hidden + c0 + head_dim);
        Var v = tensor::slice(block, 1, 2 * hidden + c0, 2 * hidden + c0 + head_dim);
        Var scores = tensor::scale(tensor::matmul(q, k, false, true), inv_sqrt_dk);
        Var probs = tensor::softmax_masked(scores, masks[b], {.allow_fully_masked = false});
        if (last && options.attention_capture) {
          (*options.attention_capture)[b].push_back(probs.value());
        }
        heads.push_back(tensor::matmul(probs, v));
      }
      per_example.push_back(config.heads == 1 ? heads.front() : tensor::concat(heads, 1));
    }
    Var attended = per_example.size() == 1 ? per_example.front() : tensor::concat(per_example, 0);
    h = tensor::add(h, maybe_dropout(linear(attended, params[s.attn_out_weight],
                                            params[s.attn_out_bias])));

    Var ffn_in = affine_norm(h, params[s.ffn_norm_gain], params[s.ffn_norm_bias],
                             config.layer_norm_eps);
    Var ffn = linear(tensor::gelu(linear(ffn_in, params[s.ffn_in_weight], params[s.ffn_in_bias])),
                     params[s.ffn_out_weight], params[s.ffn_out_bias]);
    h = tensor::add(h, maybe_dropout(ffn));
    if (options.layer_states) options.layer_states->push_back(h);
  }

  result.hidden = affine_norm(h, params[model.final_norm_gain], params[model.final_norm_bias],
                              config.layer_norm_eps);

  std::vector<std::uint32_t> word_rows, span_rows;
  std::size_t logits_offset = 0;
  for (const ExampleRows& r : result.rows) {
    result.target_offsets.push_back(logits_offset);
    logits_offset += r.target_len;
    for (std::size_t i = 0; i < r.target_len; ++i) {
      if (flows.word) word_rows.push_back(static_cast<std::uint32_t>(r.word_row(i)));
      if (flows.span) span_rows.push_back(static_cast<std::uint32_t>(r.span_row(i)));
    }
  }
  const auto project = [&](std::vector<std::uint32_t> rows) {
    Var states = tensor::embedding_lookup(result.hidden, std::move(rows));
    return tensor::add(tensor::matmul(states, params[model.token_embedding], false, true),
                       params[model.output_bias]);
  };
  if (flows.word && !word_rows.empty()) result.word_logits = project(std::move(word_rows));
  if (flows.span && !span_rows.empty()) result.span_logits = project(std::move(span_rows));
  result.has_word = flows.word && result.word_logits.graph != nullptr;
  result.has_span = flows.span && result.span_logits.graph != nullptr;
  return result;
}

ForwardResult forward_contextual(Graph& graph, std::span<const Var> params, const ModelParams& model,
                                 const data::Batch& batch, std::vector<Var>* layer_states) {
  ForwardOptions options;
  options.flows = {false, false};
  options.layer_states = layer_states;
  return forward_multiflow(graph, params, model, batch, options);
}

}  // namespace infillgen::model
