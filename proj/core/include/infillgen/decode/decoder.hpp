// SPDX-License-Identifier: Apache-2.0
#pragma once

// Inference for the word flow. At step i the decoder inserts one [ATTN] query
// at position |S| + i that reads the cached contextual keys/values of S and of
// the tokens emitted so far, reads the logits off that query, then drops it
// and appends the emitted token as a regular contextual row.

#include <cstdint>
#include <span>
#include <vector>

#include "infillgen/model/params.hpp"
#include "infillgen/tensor/tensor.hpp"
#include "infillgen/text/vocab.hpp"

namespace infillgen::decode {

using text::TokenId;

struct DecodeConfig {
  std::size_t max_length = 32;
  std::size_t beam_size = 1;
  /// score = log P / len^alpha, len counting the end token when emitted.
  double length_penalty = 1.0;
  TokenId end_token = text::special::kEos;
  /// The end token is suppressed until this many tokens have been emitted.
  std::size_t min_length = 0;

  void validate() const;
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // without the end token
  double log_prob = 0.0;
  double score = 0.0;
  bool finished = false;  // ended with the end token
};

/// Length-normalised score of a hypothesis of `length` tokens.
double hypothesis_score(double log_prob, std::size_t length, double alpha);

/// Next-token logits (1 x V) by running the full graph forward over
/// X = [S; prefix; PAD] with one word-flow query for position |prefix|.
tensor::Tensor full_recompute_logits(const model::ModelParams& model,
                                     std::span<const TokenId> source,
                                     std::span<const TokenId> prefix);

/// Cached decoder state for one source. Copyable, so beams can fork it.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const model::ModelParams& model, std::span<const TokenId> source);

  /// Logits (1 x V) for the next target position.
  tensor::Tensor next_logits() const;
  /// Commits `token` as the next target token.
  void append(TokenId token);

  std::size_t source_length() const noexcept { return source_len_; }
  std::size_t prefix_length() const noexcept { return prefix_len_; }
  /// Steps left before a query position would exceed max_positions.
  std::size_t remaining_positions() const noexcept;

 private:
  /// Runs `rows` embeddings through every block. With `commit` their keys
  /// and values join the cache; otherwise they attend to the cache plus
  /// themselves and are discarded. Returns the final-norm output.
  tensor::Tensor run(tensor::Tensor rows, bool commit);
  tensor::Tensor embed(std::span<const TokenId> tokens, std::size_t first_position,
                       std::uint32_t segment) const;

  const model::ModelParams* model_;
  std::size_t source_len_ = 0;
  std::size_t prefix_len_ = 0;
  std::size_t cached_rows_ = 0;
  std::vector<std::vector<double>> keys_;    // per layer, rows x H
  std::vector<std::vector<double>> values_;  // per layer, rows x H
};

/// Greedy search; ties go to the smaller token id. When `step_logits` is
/// given it receives the logits used at every step.
Hypothesis greedy_decode(const model::ModelParams& model, std::span<const TokenId> source,
                         const DecodeConfig& config,
                         std::vector<tensor::Tensor>* step_logits = nullptr);

/// Beam search. Each step keeps the best `beam_size` extensions by
/// (score, then token ids lexicographically); extensions ending in the end
/// token retire. Returns up to `beam_size` hypotheses, best first.
std::vector<Hypothesis> beam_decode(const model::ModelParams& model,
                                    std::span<const TokenId> source, const DecodeConfig& config);

/// Dispatches on config.beam_size and returns the best hypothesis.
Hypothesis decode(const model::ModelParams& model, std::span<const TokenId> source,
                  const DecodeConfig& config);

}  // namespace infillgen::decode
