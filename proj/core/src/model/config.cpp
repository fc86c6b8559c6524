// SPDX-License-Identifier: Apache-2.0
#include "infillgen/model/config.hpp"

#include <nlohmann/json.hpp>

#include "infillgen/error.hpp"

namespace infillgen::model {

void ModelConfig::validate() const {
  if (hidden == 0 || heads == 0 || ffn == 0 || vocab_size == 0 || max_positions == 0) {
    throw UsageError("model: sizes must be positive");
  }
  if (hidden % heads != 0) throw UsageError("model: hidden must be divisible by heads");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("model: lambda must be in [0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("model: dropout must be in [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw UsageError("model: layer_norm_eps must be positive");
  if (!(init_std > 0.0)) throw UsageError("model: init_std must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"hidden", c.hidden},
                     {"heads", c.heads},
                     {"ffn", c.ffn},
                     {"vocab_size", c.vocab_size},
                     {"max_positions", c.max_positions},
                     {"dropout", c.dropout},
                     {"lambda", c.lambda},
                     {"layer_norm_eps", c.layer_norm_eps},
                     {"init_std", c.init_std}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "layers") c.layers = value.get<std::size_t>();
    else if (key == "hidden") c.hidden = value.get<std::size_t>();
    else if (key == "heads") c.heads = value.get<std::size_t>();
    else if (key == "ffn") c.ffn = value.get<std::size_t>();
    else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
    else if (key == "max_positions") c.max_positions = value.get<std::size_t>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else if (key == "lambda") c.lambda = value.get<double>();
    else if (key == "layer_norm_eps") c.layer_norm_eps = value.get<double>();
    else if (key == "init_std") c.init_std = value.get<double>();
    else throw UsageError("model config: unknown key '" + key + "'");
  }
}

}  // namespace infillgen::model
