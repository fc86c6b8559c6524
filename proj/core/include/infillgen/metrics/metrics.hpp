// SPDX-License-Identifier: Apache-2.0
#pragma once

// Token-level evaluation metrics over lowercased whitespace tokens. Every
// score lies in [0, 1]; empty inputs score 0 instead of raising.

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace infillgen::metrics {

using Tokens = std::vector<std::string>;

struct EvalPair {
  Tokens hypothesis;
  std::vector<Tokens> references;  // at least one
};

/// Lowercases and splits on whitespace.
Tokens tokenize(std::string_view text);
EvalPair make_pair(std::string_view hypothesis, std::string_view reference);

/// F1 of clipped n-gram overlap, max over references.
double rouge_n(const EvalPair& pair, std::size_t n);
/// LCS-based F1 (beta = 1), max over references.
double rouge_l(const EvalPair& pair);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// Name of the smoothing used by bleu(), printed in reports.
inline constexpr std::string_view kBleuSmoothing = "add-one for n>=2";

/// Corpus BLEU: clipped n-gram precisions summed over the corpus, order 1
/// unsmoothed and orders >= 2 as (matches + 1) / (total + 1), geometric mean,
/// times the brevity penalty exp(1 - r/c) when c <= r. The reference length
/// per pair is the closest reference length, shorter on ties.
double bleu(std::span<const EvalPair> pairs, std::size_t max_n = 4);

/// Unique n-grams over all hypotheses divided by total n-grams.
double distinct_n(std::span<const Tokens> hypotheses, std::size_t n);

struct MetricScore {
  std::string name;
  double corpus = 0.0;
  /// Per-pair values; empty for corpus-only metrics (BLEU, Distinct).
  std::vector<double> per_pair;
};

struct ScoreReport {
  std::size_t pair_count = 0;
  std::vector<MetricScore> metrics;

  const MetricScore* find(std::string_view name) const;
  /// Header naming the BLEU smoothing, then "name<TAB>value<TAB>count" lines.
  void write_text(std::ostream& out) const;
  /// One row per pair with the per-pair metrics as columns.
  void write_pairs_tsv(std::ostream& out) const;
};

/// Known names: rouge-1, rouge-2, rouge-l, bleu-4 (any bleu-N), distinct-1,
/// distinct-2 (any distinct-N). Throws UsageError on an unknown name.
ScoreReport evaluate(std::span<const EvalPair> pairs, std::span<const std::string> metric_names);
std::vector<std::string> default_metric_names();

}  // namespace infillgen::metrics
