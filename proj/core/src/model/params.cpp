// SPDX-License-Identifier: Apache-2.0
#include "infillgen/model/params.hpp"

#include <random>

#include <nlohmann/json.hpp>

#include "infillgen/error.hpp"

namespace infillgen::model {

using tensor::Shape;
using tensor::Tensor;

namespace {

class Builder {
 public:
  Builder(ModelParams& params, std::uint64_t seed, double std)
      : params_(params), rng_(seed), normal_(0.0, std) {}

  std::size_t normal(std::string name, Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = normal_(rng_);
    return add(std::move(name), std::move(t));
  }
  std::size_t constant(std::string name, Shape shape, double value) {
    return add(std::move(name), Tensor(std::move(shape), value));
  }

 private:
  std::size_t add(std::string name, Tensor t) {
    params_.names.push_back(std::move(name));
    params_.values.push_back(std::move(t));
    return params_.values.size() - 1;
  }

  ModelParams& params_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

void layout_parameters(ModelParams& p, Builder& b) {
  const ModelConfig& c = p.config;
  const std::size_t h = c.hidden;
  p.token_embedding = b.normal("embeddings.token", {c.vocab_size, h});
  p.position_embedding = b.normal("embeddings.position", {c.max_positions, h});
  p.segment_embedding = b.normal("embeddings.segment", {2, h});
  p.layers.clear();
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    LayerSlots s{};
    s.attn_norm_gain = b.constant(prefix + "attn_norm.gain", {h}, 1.0);
    s.attn_norm_bias = b.constant(prefix + "attn_norm.bias", {h}, 0.0);
    s.qkv_weight = b.normal(prefix + "attn.qkv.weight", {h, 3 * h});
    s.qkv_bias = b.constant(prefix + "attn.qkv.bias", {3 * h}, 0.0);
    s.attn_out_weight = b.normal(prefix + "attn.out.weight", {h, h});
    s.attn_out_bias = b.constant(prefix + "attn.out.bias", {h}, 0.0);
    s.ffn_norm_gain = b.constant(prefix + "ffn_norm.gain", {h}, 1.0);
    s.ffn_norm_bias = b.constant(prefix + "ffn_norm.bias", {h}, 0.0);
    s.ffn_in_weight = b.normal(prefix + "ffn.in.weight", {h, c.ffn});
    s.ffn_in_bias = b.constant(prefix + "ffn.in.bias", {c.ffn}, 0.0);
    s.ffn_out_weight = b.normal(prefix + "ffn.out.weight", {c.ffn, h});
    s.ffn_out_bias = b.constant(prefix + "ffn.out.bias", {h}, 0.0);
    p.layers.push_back(s);
  }
  p.final_norm_gain = b.constant("final_norm.gain", {h}, 1.0);
  p.final_norm_bias = b.constant("final_norm.bias", {h}, 0.0);
  p.output_bias = b.constant("output.bias", {c.vocab_size}, 0.0);
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  Builder b(p, seed, config.init_std);
  layout_parameters(p, b);
  return p;
}

std::size_t ModelParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw UsageError("model: no parameter named '" + name + "'");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for (const Tensor& t : values) total += t.numel();
  return total;
}

tensor::Checkpoint ModelParams::to_checkpoint() const {
  tensor::Checkpoint ck;
  ck.metadata["config"] = nlohmann::json(config).dump();
  for (std::size_t i = 0; i < values.size(); ++i) ck.tensors.emplace_back(names[i], values[i]);
  return ck;
}

ModelParams ModelParams::from_checkpoint(const tensor::Checkpoint& checkpoint) {
  const auto it = checkpoint.metadata.find("config");
  if (it == checkpoint.metadata.end()) throw DataError("checkpoint: missing model config");
  ModelConfig config;
  try {
    config = nlohmann::json::parse(it->second).get<ModelConfig>();
    config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad model config: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint: bad model config: ") + e.what());
  }
  ModelParams p;
  p.config = config;
  Builder b(p, 0, 1.0);  // values are overwritten below
  layout_parameters(p, b);
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    const Tensor* stored = checkpoint.find(p.names[i]);
    if (stored == nullptr) throw DataError("checkpoint: missing parameter " + p.names[i]);
    if (stored->shape() != p.values[i].shape()) {
      throw DataError("checkpoint: parameter " + p.names[i] + " has shape " +
                      tensor::shape_to_string(stored->shape()) + ", expected " +
                      tensor::shape_to_string(p.values[i].shape()));
    }
    p.values[i] = *stored;
  }
  return p;
}

std::vector<tensor::Var> bind_parameters(tensor::Graph& graph, const ModelParams& params,
                                         bool requires_grad) {
  std::vector<tensor::Var> vars;
  vars.reserve(params.values.size());
  for (const Tensor& t : params.values) vars.push_back(graph.leaf(t, requires_grad));
  return vars;
}

}  // namespace infillgen::model
