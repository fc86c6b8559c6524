// SPDX-License-Identifier: Apache-2.0
#pragma once

// Diagnostic for noise-aware training: where do word-flow queries put their
// last-layer attention (averaged over heads) among source keys, clean target
// keys and corrupted target keys?

#include <iosfwd>
#include <span>
#include <vector>

#include "infillgen/data/example.hpp"
#include "infillgen/model/params.hpp"

namespace infillgen::harness {

struct AttentionMass {
  /// Mean attention mass per query; the four add up to 1.
  double source = 0.0;
  double unnoised = 0.0;
  double noised = 0.0;
  double self = 0.0;
  /// Mean weight per attended key of each kind.
  double source_per_key = 0.0;
  double unnoised_per_key = 0.0;
  double noised_per_key = 0.0;
  std::size_t queries = 0;
  std::size_t noised_keys = 0;  // (query, key) pairs
  std::size_t unnoised_keys = 0;

  bool has_noised() const noexcept { return noised_keys > 0; }
};

/// Runs the word flow over `examples` (their `corrupted` flags mark noised
/// target tokens) in batches of `batch_size`.
AttentionMass measure_attention(const model::ModelParams& model,
                                std::span<const data::TrainingExample> examples,
                                std::size_t batch_size = 32);

struct AttentionRow {
  double rate = 0.0;
  AttentionMass mass;
};

struct PairedSequence {
  std::vector<text::TokenId> source;
  std::vector<text::TokenId> target;
};

/// For each rate, noises every target at that rate (seeded per example) and
/// measures attention.
std::vector<AttentionRow> analyze_attention(const model::ModelParams& model,
                                            std::span<const PairedSequence> pairs,
                                            std::span<const double> rates,
                                            data::NoiseConfig noise, std::uint64_t seed);

/// One table per rate: kind, mass, per-key weight. A rate without noised
/// tokens prints "-" in the noised row.
void write_attention_table(std::ostream& out, std::span<const AttentionRow> rows);

}  // namespace infillgen::harness
