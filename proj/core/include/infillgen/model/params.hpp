// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "infillgen/model/config.hpp"
#include "infillgen/tensor/checkpoint.hpp"
#include "infillgen/tensor/graph.hpp"

namespace infillgen::model {

/// Indices into ModelParams::values for one transformer block.
struct LayerSlots {
  std::size_t attn_norm_gain, attn_norm_bias;
  std::size_t qkv_weight, qkv_bias;      // H x 3H, 3H
  std::size_t attn_out_weight, attn_out_bias;
  std::size_t ffn_norm_gain, ffn_norm_bias;
  std::size_t ffn_in_weight, ffn_in_bias;    // H x F, F
  std::size_t ffn_out_weight, ffn_out_bias;  // F x H, H
};

/// Shared transformer weights. Every flow reads the same tensors; the output
/// projection reuses the token embedding (tied) plus its own bias.
struct ModelParams {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<tensor::Tensor> values;

  std::size_t token_embedding = 0;     // V x H, row 4 is the [ATTN] embedding
  std::size_t position_embedding = 0;  // P x H
  std::size_t segment_embedding = 0;   // 2 x H
  std::vector<LayerSlots> layers;
  std::size_t final_norm_gain = 0, final_norm_bias = 0;
  std::size_t output_bias = 0;  // V

  /// Normal(0, init_std) weights, zero biases, unit norm gains.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  std::size_t index_of(const std::string& name) const;
  std::size_t parameter_count() const;

  /// Parameters under their names plus "config" metadata (JSON).
  tensor::Checkpoint to_checkpoint() const;
  /// Throws DataError when a parameter is missing or has the wrong shape.
  static ModelParams from_checkpoint(const tensor::Checkpoint& checkpoint);
};

/// Leaves for every parameter, in ModelParams order.
std::vector<tensor::Var> bind_parameters(tensor::Graph& graph, const ModelParams& params,
                                         bool requires_grad);

}  // namespace infillgen::model
