// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "infillgen/spans/span_vocab.hpp"
#include "infillgen/text/vocab.hpp"

namespace infillgen::data {

using text::TokenId;

struct LengthDistribution {
  std::size_t low = 1;   // inclusive
  std::size_t high = 1;  // inclusive
  double probability = 1.0;
};

struct FragmentSamplingConfig {
  double gamma = 0.25;
  std::vector<LengthDistribution> distributions{{1, 4, 0.4}, {4, 32, 0.6}};

  /// gamma in (0, 1); probabilities sum to 1 (within 1e-9); 1 <= low <= high.
  void validate() const;
};

struct FragmentSpan {
  std::size_t start = 0;  // offset in the original sequence
  std::size_t length = 0;

  friend bool operator==(const FragmentSpan&, const FragmentSpan&) = default;
};

struct FragmentSample {
  std::vector<TokenId> s_prime;
  std::vector<TokenId> t_clean;
  /// Sorted by start.
  std::vector<FragmentSpan> fragments;
  /// Index of the length distribution drawn for this example.
  std::size_t distribution = 0;
};

/// Multi-granularity fragment sampling.
///
/// RNG consumption, in order, from mt19937_64(seed):
///   1. u ~ uniform_real[0,1): the distribution is the first whose cumulative
///      probability exceeds u (the last one if rounding leaves u uncovered).
///   2. per fragment: len ~ uniform_int[low, high], clipped to the remaining
///      budget floor(gamma*|s|); then a start drawn uniformly (uniform_int over
///      indices) from all starts whose window avoids existing fragments. If no
///      start fits, len shrinks by one and the start draw repeats.
/// A zero budget forces a single length-1 fragment. Throws UsageError when
/// |s| < 2.
FragmentSample sample_fragments(std::span<const TokenId> s, const FragmentSamplingConfig& config,
                                std::uint64_t seed);

struct NoiseConfig {
  double rate = 0.05;
  /// Replacement ids are drawn uniformly from [first_candidate, vocab_size).
  TokenId first_candidate = text::special::kFirstRegular;
  TokenId vocab_size = 0;

  void validate() const;
};

struct NoisedSequence {
  std::vector<TokenId> tokens;
  /// 1 where a replacement event happened (the draw may equal the original).
  std::vector<std::uint8_t> replaced;
};

/// Per position: r ~ uniform_real[0,1); when r < rate, a replacement id is
/// drawn with uniform_int. Deterministic in seed.
NoisedSequence apply_noise(std::span<const TokenId> t, const NoiseConfig& config,
                           std::uint64_t seed);

/// Masking-mode corruption: each position becomes [MASK] with `probability`;
/// `replaced` marks the masked positions.
NoisedSequence apply_masking(std::span<const TokenId> t, double probability, std::uint64_t seed);

/// One assembled instance. Positions are contiguous over [S'; T']; the
/// word-flow and span-flow [ATTN] slot for target i share T'[i]'s position.
struct TrainingExample {
  std::vector<TokenId> s_prime;
  std::vector<TokenId> t_clean;
  std::vector<TokenId> t_noised;
  std::vector<FragmentSpan> fragments;
  std::size_t distribution = 0;
  /// Per target position: 1 where the input token was corrupted.
  std::vector<std::uint8_t> corrupted;
  /// Per target position: 1 where the loss is taken.
  std::vector<std::uint8_t> loss_mask;
  spans::SpanBoundaries spans;
  /// Per token of [S'; T'].
  std::vector<std::uint32_t> positions;
  std::vector<std::uint32_t> segments;

  std::size_t source_len() const noexcept { return s_prime.size(); }
  std::size_t target_len() const noexcept { return t_noised.size(); }
  std::size_t a_w_len() const noexcept { return t_noised.size(); }
  /// Position id of the [ATTN] slot predicting target i (both flows).
  std::uint32_t query_position(std::size_t i) const {
    return static_cast<std::uint32_t>(s_prime.size() + i);
  }
  /// |S'| + |T'|.
  std::size_t token_count() const noexcept { return s_prime.size() + t_noised.size(); }

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

/// Fills positions/segments for an example whose sequences are set.
void fill_layout(TrainingExample& example);

/// Pre-training assembly: fragments (seed-derived salt 1), noise (salt 2),
/// then span segmentation of T'. `span_vocab` may be null, which yields
/// single-token spans.
TrainingExample assemble_example(std::span<const TokenId> s, const spans::SpanVocab* span_vocab,
                                 const FragmentSamplingConfig& fragment_config,
                                 const NoiseConfig& noise_config, std::uint64_t seed);

enum class CorruptionMode { kNoising, kMasking };

/// Paired (source, target) assembly used for fine-tuning and toy tasks. In
/// noising mode the target is corrupted at `rate` and every position carries
/// loss; in masking mode positions become [MASK] at `rate` and only those
/// carry loss.
TrainingExample assemble_pair(std::span<const TokenId> source, std::span<const TokenId> target,
                              const spans::SpanVocab* span_vocab, CorruptionMode mode,
                              const NoiseConfig& noise_config, std::uint64_t seed);

/// Row-major id matrix.
struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> data;

  IdMatrix() = default;
  IdMatrix(std::size_t r, std::size_t c, std::uint32_t fill = 0) : rows(r), cols(c), data(r * c, fill) {}
  std::uint32_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  std::uint32_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Padded batch. Every matrix is padded with [PAD] (0) to the batch maxima.
struct Batch {
  std::vector<TrainingExample> examples;
  IdMatrix tokens;       // [S'; T'] ids
  IdMatrix positions;    // over [S'; T']
  IdMatrix segments;
  IdMatrix word_queries;  // A_W: [ATTN] or [PAD]
  IdMatrix span_queries;  // A_S: [ATTN] or [PAD]
  IdMatrix query_positions;
  IdMatrix targets;       // clean targets
  IdMatrix loss_mask;     // 1 on real target positions that carry loss
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;

  std::size_t size() const noexcept { return examples.size(); }
  std::size_t loss_positions() const;
};

Batch make_batch(std::vector<TrainingExample> examples);

/// Greedy packing in input order. A batch's cost is rows * max(|S'|+|T'|);
/// a new batch starts when adding an example would exceed `max_tokens`.
/// Throws UsageError when one example alone exceeds the limit.
std::vector<Batch> batch(std::vector<TrainingExample> examples, std::size_t max_tokens);

/// Versioned binary cache of assembled examples.
void save_examples(const std::filesystem::path& path, const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> load_examples(const std::filesystem::path& path);
/// Human-readable dump, one field per line, used by golden tests.
void dump_example_text(std::ostream& out, const TrainingExample& example);

}  // namespace infillgen::data
