// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

namespace infillgen::model {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 2;
  std::size_t ffn = 256;
  std::size_t vocab_size = 64;
  std::size_t max_positions = 64;
  double dropout = 0.1;
  /// Weight of the word-by-word loss; the span-by-span loss gets 1 - lambda.
  double lambda = 0.5;
  double layer_norm_eps = 1e-6;
  double init_std = 0.02;

  /// hidden divisible by heads, lambda in [0, 1], sizes positive.
  void validate() const;
  std::size_t head_dim() const noexcept { return hidden / heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace infillgen::model
