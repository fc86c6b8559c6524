// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration. The file format is JSON with one object per
// section; command-line `--set section.key=value` overrides are applied on top
// of the file, so precedence is: built-in defaults < file < overrides.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "infillgen/data/example.hpp"
#include "infillgen/decode/decoder.hpp"
#include "infillgen/model/config.hpp"
#include "infillgen/tensor/adam.hpp"

namespace infillgen::harness {

struct PathConfig {
  std::string corpus;
  std::string vocab;
  std::string span_vocab;
  std::string data;
  std::string checkpoint;  // run directory for training, file for reading
  std::string init_checkpoint;
  std::string output;
};

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double label_smoothing = 0.1;
  /// When positive, warmup_steps = round(warmup_ratio * steps).
  double warmup_ratio = 0.0;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::size_t log_every = 10;
  /// "noising" or "masking".
  std::string finetune_mode = "noising";
  /// Corruption rate used in fine-tuning (noising rate or masking probability).
  double finetune_rate = 0.5;
  double finetune_lambda = 1.0;
  std::size_t max_tokens = 4096;  // make-data batch budget
  bool lowercase = true;
  std::size_t max_length = 512;   // tokens kept per line
  std::size_t vocab_min_count = 1;
  std::size_t vocab_max_size = 0;
};

struct RunConfig {
  PathConfig paths;
  model::ModelConfig model;
  tensor::OptimizerConfig optimizer;
  data::FragmentSamplingConfig fragments;
  data::NoiseConfig noise;
  decode::DecodeConfig decode;
  TrainConfig train;

  /// Effective optimizer config for a run of train.steps steps.
  tensor::OptimizerConfig resolved_optimizer() const;
  /// noise.vocab_size of 0 means the model vocabulary.
  data::NoiseConfig resolved_noise() const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Unknown sections or keys raise UsageError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
/// "section.key=value"; the value is parsed as JSON when possible, otherwise
/// taken as a string.
void apply_override(RunConfig& config, std::string_view assignment);

}  // namespace infillgen::harness
