// SPDX-License-Identifier: Apache-2.0
#include "infillgen/harness/run_config.hpp"

#include <cmath>
#include <fstream>

#include "infillgen/error.hpp"

namespace infillgen::harness {

using nlohmann::json;
using text::TokenId;

namespace {

json optimizer_json(const tensor::OptimizerConfig& o) {
  return {{"beta1", o.beta1},         {"beta2", o.beta2},
          {"epsilon", o.epsilon},     {"peak_lr", o.peak_lr},
          {"warmup_steps", o.warmup_steps}, {"total_steps", o.total_steps}};
}

json fragments_json(const data::FragmentSamplingConfig& f) {
  json dists = json::array();
  for (const auto& d : f.distributions) {
    dists.push_back({{"low", d.low}, {"high", d.high}, {"probability", d.probability}});
  }
  return {{"gamma", f.gamma}, {"distributions", dists}};
}

template <typename Fn>
void for_each_key(const json& section, std::string_view name, Fn&& fn) {
  if (!section.is_object()) throw UsageError("config: section '" + std::string(name) + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!fn(key, value)) {
      throw UsageError("config: unknown key '" + std::string(name) + "." + key + "'");
    }
  }
}

template <typename T>
bool set_if(const std::string& key, const char* name, const json& value, T& field) {
  if (key != name) return false;
  field = value.get<T>();
  return true;
}

}  // namespace

tensor::OptimizerConfig RunConfig::resolved_optimizer() const {
  tensor::OptimizerConfig o = optimizer;
  o.total_steps = std::max<std::uint64_t>(train.steps, 1);
  if (train.warmup_ratio > 0.0) {
    o.warmup_steps = static_cast<std::uint64_t>(std::llround(train.warmup_ratio * train.steps));
  }
  o.warmup_steps = std::min(o.warmup_steps, o.total_steps);
  return o;
}

data::NoiseConfig RunConfig::resolved_noise() const {
  data::NoiseConfig n = noise;
  if (n.vocab_size == 0) n.vocab_size = static_cast<TokenId>(model.vocab_size);
  return n;
}

void RunConfig::validate() const {
  model.validate();
  resolved_optimizer().validate();
  fragments.validate();
  resolved_noise().validate();
  decode.validate();
  if (train.batch_size == 0) throw UsageError("config: train.batch_size must be positive");
  if (train.finetune_mode != "noising" && train.finetune_mode != "masking") {
    throw UsageError("config: train.finetune_mode must be 'noising' or 'masking'");
  }
  if (!(train.finetune_rate >= 0.0 && train.finetune_rate <= 1.0)) {
    throw UsageError("config: train.finetune_rate must be in [0, 1]");
  }
  if (!(train.warmup_ratio >= 0.0 && train.warmup_ratio <= 1.0)) {
    throw UsageError("config: train.warmup_ratio must be in [0, 1]");
  }
  if (!(train.label_smoothing >= 0.0 && train.label_smoothing < 1.0)) {
    throw UsageError("config: train.label_smoothing must be in [0, 1)");
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["paths"] = {{"corpus", c.paths.corpus},         {"vocab", c.paths.vocab},
                {"span_vocab", c.paths.span_vocab}, {"data", c.paths.data},
                {"checkpoint", c.paths.checkpoint}, {"init_checkpoint", c.paths.init_checkpoint},
                {"output", c.paths.output}};
  j["model"] = c.model;
  j["optimizer"] = optimizer_json(c.optimizer);
  j["fragments"] = fragments_json(c.fragments);
  j["noise"] = {{"rate", c.noise.rate},
                {"first_candidate", c.noise.first_candidate},
                {"vocab_size", c.noise.vocab_size}};
  j["decode"] = {{"max_length", c.decode.max_length},
                 {"beam_size", c.decode.beam_size},
                 {"length_penalty", c.decode.length_penalty},
                 {"end_token", c.decode.end_token},
                 {"min_length", c.decode.min_length}};
  const TrainConfig& t = c.train;
  j["train"] = {{"steps", t.steps},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"label_smoothing", t.label_smoothing},
                {"warmup_ratio", t.warmup_ratio},
                {"checkpoint_every", t.checkpoint_every},
                {"log_every", t.log_every},
                {"finetune_mode", t.finetune_mode},
                {"finetune_rate", t.finetune_rate},
                {"finetune_lambda", t.finetune_lambda},
                {"max_tokens", t.max_tokens},
                {"lowercase", t.lowercase},
                {"max_length", t.max_length},
                {"vocab_min_count", t.vocab_min_count},
                {"vocab_max_size", t.vocab_max_size}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (!j.is_object()) throw UsageError("config: top level must be an object");
  try {
    for (const auto& [section, value] : j.items()) {
      if (section == "paths") {
        PathConfig& p = c.paths;
        for_each_key(value, section, [&](const std::string& k, const json& v) {
          return set_if(k, "corpus", v, p.corpus) || set_if(k, "vocab", v, p.vocab) ||
                 set_if(k, "span_vocab", v, p.span_vocab) || set_if(k, "data", v, p.data) ||
                 set_if(k, "checkpoint", v, p.checkpoint) ||
                 set_if(k, "init_checkpoint", v, p.init_checkpoint) ||
                 set_if(k, "output", v, p.output);
        });
      } else if (section == "model") {
        c.model = value.get<model::ModelConfig>();
      } else if (section == "optimizer") {
        tensor::OptimizerConfig& o = c.optimizer;
        for_each_key(value, section, [&](const std::string& k, const json& v) {
          return set_if(k, "beta1", v, o.beta1) || set_if(k, "beta2", v, o.beta2) ||
                 set_if(k, "epsilon", v, o.epsilon) || set_if(k, "peak_lr", v, o.peak_lr) ||
                 set_if(k, "warmup_steps", v, o.warmup_steps) ||
                 set_if(k, "total_steps", v, o.total_steps);
        });
      } else if (section == "fragments") {
        data::FragmentSamplingConfig& f = c.fragments;
        for_each_key(value, section, [&](const std::string& k, const json& v) {
          if (set_if(k, "gamma", v, f.gamma)) return true;
          if (k != "distributions") return false;
          f.distributions.clear();
          for (const json& d : v) {
            f.distributions.push_back({d.at("low").get<std::size_t>(), d.at("high").get<std::size_t>(),
                                       d.at("probability").get<double>()});
          }
          return true;
        });
      } else if (section == "noise") {
        data::NoiseConfig& n = c.noise;
        for_each_key(value, section, [&](const std::string& k, const json& v) {
          return set_if(k, "rate", v, n.rate) || set_if(k, "first_candidate", v, n.first_candidate) ||
                 set_if(k, "vocab_size", v, n.vocab_size);
        });
      } else if (section == "decode") {
        decode::DecodeConfig& d = c.decode;
        for_each_key(value, section, [&](const std::string& k, const json& v) {
          return set_if(k, "max_length", v, d.max_length) ||
                 set_if(k, "beam_size", v, d.beam_size) ||
                 set_if(k, "length_penalty", v, d.length_penalty) ||
                 set_if(k, "end_token", v, d.end_token) || set_if(k, "min_length", v, d.min_length);
        });
      } else if (section == "train") {
        TrainConfig& t = c.train;
        for_each_key(value, section, [&](const std::string& k, const json& v) {
          return set_if(k, "steps", v, t.steps) || set_if(k, "batch_size", v, t.batch_size) ||
                 set_if(k, "seed", v, t.seed) ||
                 set_if(k, "label_smoothing", v, t.label_smoothing) ||
                 set_if(k, "warmup_ratio", v, t.warmup_ratio) ||
                 set_if(k, "checkpoint_every", v, t.checkpoint_every) ||
                 set_if(k, "log_every", v, t.log_every) ||
                 set_if(k, "finetune_mode", v, t.finetune_mode) ||
                 set_if(k, "finetune_rate", v, t.finetune_rate) ||
                 set_if(k, "finetune_lambda", v, t.finetune_lambda) ||
                 set_if(k, "max_tokens", v, t.max_tokens) || set_if(k, "lowercase", v, t.lowercase) ||
                 set_if(k, "max_length", v, t.max_length) ||
                 set_if(k, "vocab_min_count", v, t.vocab_min_count) ||
                 set_if(k, "vocab_max_size", v, t.vocab_max_size);
        });
      } else {
        throw UsageError("config: unknown section '" + section + "'");
      }
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config: " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  const std::size_t dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw UsageError("config: override must look like section.key=value, got '" +
                     std::string(assignment) + "'");
  }
  const std::string section(assignment.substr(0, dot));
  const std::string key(assignment.substr(dot + 1, eq - dot - 1));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json j = to_json(config);
  if (!j.contains(section) || !j[section].contains(key)) {
    throw UsageError("config: unknown key '" + section + "." + key + "'");
  }
  j[section][key] = value;
  config = run_config_from_json(j);
}

}  // namespace infillgen::harness
