// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic training loop. The examples and dropout masks of step k are a
// pure function of (seed, k), so a run resumed from a trainer checkpoint
// continues exactly as the uninterrupted run would have.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "infillgen/data/example.hpp"
#include "infillgen/model/params.hpp"
#include "infillgen/tensor/adam.hpp"
#include "infillgen/tensor/checkpoint.hpp"

namespace infillgen::harness {

/// Builds the (possibly freshly corrupted) example for dataset item `index`.
using ExampleFactory = std::function<data::TrainingExample(std::size_t index, std::uint64_t seed)>;

struct TrainerOptions {
  tensor::OptimizerConfig optimizer;
  /// Weight of the word-flow loss; 1 skips the span flow entirely.
  double lambda = 0.5;
  double label_smoothing = 0.1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  /// Where a diagnostic dump goes when the loss stops being finite.
  std::filesystem::path dump_dir;
};

struct StepRecord {
  std::uint64_t step = 0;
  double word_loss = 0.0;
  double span_loss = 0.0;
  double total = 0.0;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
};

class Trainer {
 public:
  Trainer(model::ModelParams params, TrainerOptions options, ExampleFactory factory,
          std::size_t dataset_size);

  /// Restores parameters, optimizer moments and the step counter.
  static Trainer resume(const tensor::Checkpoint& state, TrainerOptions options,
                        ExampleFactory factory, std::size_t dataset_size);

  /// Runs one optimizer step. Throws NumericalError (after writing a dump)
  /// when the loss is not finite.
  StepRecord step();

  /// Dataset indices used by step `k` (1-based): an epoch-wise shuffled
  /// order drawn from the seed.
  std::vector<std::size_t> indices_for_step(std::uint64_t k) const;
  std::vector<data::TrainingExample> examples_for_step(std::uint64_t k) const;

  std::uint64_t completed_steps() const noexcept { return step_; }
  const model::ModelParams& params() const noexcept { return params_; }
  const TrainerOptions& options() const noexcept { return options_; }

  /// Parameters plus "adam.m.*" / "adam.v.*" moments and a "step" entry.
  tensor::Checkpoint state_checkpoint() const;

 private:
  model::ModelParams params_;
  TrainerOptions options_;
  ExampleFactory factory_;
  std::size_t dataset_size_;
  tensor::AdamState adam_;
  std::uint64_t step_ = 0;
  mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  mutable std::vector<std::size_t> cached_order_;
};

}  // namespace infillgen::harness
