// SPDX-License-Identifier: Apache-2.0
#include "infillgen/harness/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "infillgen/error.hpp"
#include "infillgen/model/loss.hpp"
#include "infillgen/model/multiflow.hpp"
#include "infillgen/random.hpp"

namespace infillgen::harness {

namespace {

constexpr std::uint64_t kOrderSalt = 11;
constexpr std::uint64_t kExampleSalt = 12;
constexpr std::uint64_t kDropoutSalt = 13;

}  // namespace

Trainer::Trainer(model::ModelParams params, TrainerOptions options, ExampleFactory factory,
                 std::size_t dataset_size)
    : params_(std::move(params)),
      options_(std::move(options)),
      factory_(std::move(factory)),
      dataset_size_(dataset_size),
      adam_(tensor::AdamState::zeros_like(params_.values)) {
  options_.optimizer.validate();
  if (dataset_size_ == 0) throw UsageError("trainer: empty dataset");
  if (options_.batch_size == 0) throw UsageError("trainer: batch_size must be positive");
  if (!(options_.lambda >= 0.0 && options_.lambda <= 1.0)) {
    throw UsageError("trainer: lambda must be in [0, 1]");
  }
}

Trainer Trainer::resume(const tensor::Checkpoint& state, TrainerOptions options,
                        ExampleFactory factory, std::size_t dataset_size) {
  Trainer t(model::ModelParams::from_checkpoint(state), std::move(options), std::move(factory),
            dataset_size);
  for (std::size_t i = 0; i < t.params_.names.size(); ++i) {
    const tensor::Tensor* m = state.find("adam.m." + t.params_.names[i]);
    const tensor::Tensor* v = state.find("adam.v." + t.params_.names[i]);
    if (m == nullptr || v == nullptr) {
      throw DataError("trainer: state is missing optimizer moments for " + t.params_.names[i]);
    }
    t.adam_.first_moment[i] = *m;
    t.adam_.second_moment[i] = *v;
  }
  const auto it = state.metadata.find("step");
  if (it == state.metadata.end()) throw DataError("trainer: state has no step counter");
  t.step_ = std::stoull(it->second);
  return t;
}

std::vector<std::size_t> Trainer::indices_for_step(std::uint64_t k) const {
  std::vector<std::size_t> out;
  out.reserve(options_.batch_size);
  for (std::size_t slot = 0; slot < options_.batch_size; ++slot) {
    const std::uint64_t global = (k - 1) * options_.batch_size + slot;
    const std::uint64_t epoch = global / dataset_size_;
    if (epoch != cached_epoch_) {
      cached_order_.resize(dataset_size_);
      std::iota(cached_order_.begin(), cached_order_.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(derive_seed(options_.seed, kOrderSalt), epoch));
      std::shuffle(cached_order_.begin(), cached_order_.end(), rng);
      cached_epoch_ = epoch;
    }
    out.push_back(cached_order_[global % dataset_size_]);
  }
  return out;
}

std::vector<data::TrainingExample> Trainer::examples_for_step(std::uint64_t k) const {
  const std::vector<std::size_t> indices = indices_for_step(k);
  const std::uint64_t step_seed = derive_seed(derive_seed(options_.seed, kExampleSalt), k);
  std::vector<data::TrainingExample> examples;
  examples.reserve(indices.size());
  for (std::size_t slot = 0; slot < indices.size(); ++slot) {
    examples.push_back(factory_(indices[slot], derive_seed(step_seed, slot)));
  }
  return examples;
}

StepRecord Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t k = step_ + 1;
  const data::Batch batch = data::make_batch(examples_for_step(k));

  tensor::Graph graph;
  const std::vector<tensor::Var> vars = model::bind_parameters(graph, params_, true);
  model::ForwardOptions fo;
  fo.flows = {options_.lambda > 0.0, options_.lambda < 1.0};
  fo.training = true;
  fo.dropout_seed = derive_seed(derive_seed(options_.seed, kDropoutSalt), k);
  const model::FlatTargets targets = model::flatten_targets(batch);
  if (targets.counted == 0) {
    // Masking can leave a whole batch without a masked position; the step
    // then carries no loss and the parameters stay put.
    step_ = k;
    StepRecord record;
    record.step = k;
    record.learning_rate = tensor::learning_rate(options_.optimizer, k);
    return record;
  }
  const model::ForwardResult forward = model::forward_multiflow(graph, vars, params_, batch, fo);
  const model::LossBreakdown loss =
      model::compute_loss(forward, targets, options_.lambda, options_.label_smoothing);

  if (!std::isfinite(loss.total)) {
    std::string where = "(no dump directory)";
    if (!options_.dump_dir.empty()) {
      std::filesystem::create_directories(options_.dump_dir);
      const std::filesystem::path path =
          options_.dump_dir / ("nan_step" + std::to_string(k) + ".txt");
      std::ofstream out(path);
      out << "step " << k << " word_loss " << loss.word_loss << " span_loss " << loss.span_loss
          << '\n';
      for (const data::TrainingExample& ex : batch.examples) {
        data::dump_example_text(out, ex);
        out << '\n';
      }
      where = path.string();
    }
    throw NumericalError("non-finite loss at step " + std::to_string(k) + "; batch dumped to " +
                         where);
  }

  graph.backward(loss.total_var);
  std::vector<tensor::Tensor> grads;
  grads.reserve(vars.size());
  for (const tensor::Var& v : vars) grads.push_back(graph.grad(v));
  tensor::adam_step(params_.values, grads, adam_, options_.optimizer, k);
  step_ = k;

  StepRecord record;
  record.step = k;
  record.word_loss = loss.word_loss;
  record.span_loss = loss.span_loss;
  record.total = loss.total;
  record.learning_rate = tensor::learning_rate(options_.optimizer, k);
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

tensor::Checkpoint Trainer::state_checkpoint() const {
  tensor::Checkpoint ck = params_.to_checkpoint();
  for (std::size_t i = 0; i < params_.names.size(); ++i) {
    ck.tensors.emplace_back("adam.m." + params_.names[i], adam_.first_moment[i]);
    ck.tensors.emplace_back("adam.v." + params_.names[i], adam_.second_moment[i]);
  }
  ck.metadata["step"] = std::to_string(step_);
  return ck;
}

}  // namespace infillgen::harness
