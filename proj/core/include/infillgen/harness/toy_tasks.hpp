// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic sequence-to-sequence tasks over a closed vocabulary of regular
// ids [6, vocab_size). Targets end with [EOS].

#include <cstdint>
#include <string>
#include <string_view>
#include <span>
#include <vector>

#include "infillgen/text/vocab.hpp"

namespace infillgen::harness {

using text::TokenId;

enum class ToyTask { kCopy, kReverse, kHeadline };

ToyTask parse_toy_task(std::string_view name);
std::string_view toy_task_name(ToyTask task);

struct ToyTaskConfig {
  ToyTask task = ToyTask::kCopy;
  std::size_t vocab_size = 64;  // including the reserved ids
  std::size_t min_length = 1;
  std::size_t max_length = 16;
  /// Headline: number of salient tokens kept. Salient ids are the upper half
  /// of the regular range.
  std::size_t headline_tokens = 3;

  void validate() const;
};

struct ToyPair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;  // ends with [EOS]
};

/// The target for `source` under `task` (with trailing [EOS]).
std::vector<TokenId> toy_target(const ToyTaskConfig& config, std::span<const TokenId> source);

/// `count` pairs drawn from mt19937_64(seed); lengths uniform in
/// [min_length, max_length], tokens uniform over the regular ids.
std::vector<ToyPair> generate_toy_pairs(const ToyTaskConfig& config, std::size_t count,
                                        std::uint64_t seed);

/// Vocabulary whose regular tokens are "w6", "w7", ... so the token with id k
/// is spelled "w<k>".
text::Vocab toy_vocab(std::size_t vocab_size);

}  // namespace infillgen::harness
