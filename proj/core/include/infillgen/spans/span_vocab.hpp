// SPDX-License-Identifier: Apache-2.0
#pragma once

// Statistical span vocabulary: bigrams and trigrams ranked by a one-sample
// t-test against the independence hypothesis, plus every unigram. Targets are
// cut into spans by greedy longest match against that vocabulary.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "infillgen/text/vocab.hpp"

namespace infillgen::spans {

using text::TokenId;

inline constexpr std::size_t kMaxOrder = 3;

/// Token tuple of length 1..3. Among tuples of one order, comparison is
/// lexicographic over ids.
struct NGram {
  std::array<TokenId, kMaxOrder> ids{};
  std::uint8_t order = 0;

  NGram() = default;
  explicit NGram(std::span<const TokenId> tokens);
  NGram(std::initializer_list<TokenId> tokens);
  std::span<const TokenId> tokens() const { return {ids.data(), order}; }

  friend auto operator<=>(const NGram&, const NGram&) = default;
};

struct NGramHash {
  std::size_t operator()(const NGram& g) const noexcept;
};

struct NgramCounts {
  /// Index 1..3 by order; index 0 unused.
  std::array<std::unordered_map<NGram, std::uint64_t, NGramHash>, kMaxOrder + 1> counts;
  /// Total occurrences per order (N_n).
  std::array<std::uint64_t, kMaxOrder + 1> totals{};
  /// Order-independent fingerprint of the document multiset.
  std::uint64_t corpus_hash = 0;

  std::uint64_t count(const NGram& g) const;
};

/// Sliding-window counts inside each document; windows never cross documents.
NgramCounts count_ngrams(std::span<const std::vector<TokenId>> documents,
                         std::size_t max_order = kMaxOrder);

/// (p(w) - prod p(w_i)) / sqrt(p(w)(1 - p(w)) / N_n), with p(w) = Count(w)/N_n
/// and unigram probabilities over N_1. Returns +inf when p(w) == 1.
/// Throws UsageError when w (or one of its unigrams) was never counted.
double t_statistic(const NGram& w, const NgramCounts& counts);

struct SpanVocabLimits {
  std::size_t bigram_top = 2000;
  std::size_t trigram_top = 500;
};

class SpanVocab {
 public:
  SpanVocab() = default;

  bool contains(const NGram& g) const { return members_.contains(g); }
  std::size_t size() const noexcept { return members_.size(); }
  std::size_t count_of_order(std::size_t order) const;
  const SpanVocabLimits& limits() const noexcept { return limits_; }
  std::uint64_t corpus_hash() const noexcept { return corpus_hash_; }
  /// Member score (0 for unigrams).
  double score(const NGram& g) const;
  /// Members sorted by (order, ids).
  std::vector<NGram> sorted_members() const;

  /// Text format: two header lines, then "n id... score" per member.
  void save(const std::filesystem::path& path) const;
  static SpanVocab load(const std::filesystem::path& path);

 private:
  friend SpanVocab build_span_vocab(const NgramCounts&, SpanVocabLimits);
  void insert(const NGram& g, double score);

  std::unordered_set<NGram, NGramHash> members_;
  std::unordered_map<NGram, double, NGramHash> scores_;
  SpanVocabLimits limits_{};
  std::uint64_t corpus_hash_ = 0;
};

/// All unigrams, plus the top bigrams/trigrams by (-t, ids).
SpanVocab build_span_vocab(const NgramCounts& counts, SpanVocabLimits limits);

/// Span start offsets b_1..b_k over a sequence; spans tile [0, length).
struct SpanBoundaries {
  std::vector<std::size_t> starts;
  std::size_t length = 0;

  std::size_t span_count() const noexcept { return starts.size(); }
  std::size_t span_end(std::size_t span) const {
    return span + 1 < starts.size() ? starts[span + 1] : length;
  }
  /// Index of the span containing position `pos`.
  std::size_t span_of(std::size_t pos) const;
  /// Throws UsageError unless starts[0] == 0, strictly increasing, every span
  /// length in [1, max_span] and the spans end exactly at `length`.
  /// max_span == 0 lifts the length cap.
  void validate(std::size_t max_span = kMaxOrder) const;

  /// One span per token.
  static SpanBoundaries unigrams(std::size_t length);

  friend bool operator==(const SpanBoundaries&, const SpanBoundaries&) = default;
};

/// Greedy left-to-right: trigram if in the vocabulary, else bigram, else the
/// single token. Throws UsageError for an empty sequence.
SpanBoundaries segment_spans(std::span<const TokenId> tokens, const SpanVocab& vocab);

}  // namespace infillgen::spans
