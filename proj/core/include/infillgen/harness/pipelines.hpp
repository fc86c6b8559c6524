// SPDX-License-Identifier: Apache-2.0
#pragma once

// The command implementations behind the CLI. Each takes a resolved
// RunConfig (plus a few per-command arguments) and reads/writes files.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "infillgen/harness/attention_analysis.hpp"
#include "infillgen/harness/run_config.hpp"
#include "infillgen/harness/toy_tasks.hpp"
#include "infillgen/harness/trainer.hpp"
#include "infillgen/metrics/metrics.hpp"
#include "infillgen/spans/span_vocab.hpp"
#include "infillgen/text/vocab.hpp"

namespace infillgen::harness {

/// Files written inside a training run directory.
inline constexpr const char* kModelFile = "model.ckpt";
inline constexpr const char* kStateFile = "state.ckpt";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kLogFile = "train_log.tsv";
inline constexpr const char* kLockFile = "run.lock";

text::EncodeOptions encode_options(const RunConfig& config);

/// Counts corpus tokens and writes the vocabulary file. Returns its size.
std::size_t build_vocab_file(const RunConfig& config, const std::filesystem::path& out);

spans::SpanVocab build_span_vocab_file(const RunConfig& config, const std::filesystem::path& out,
                                       spans::SpanVocabLimits limits);

/// Assembles one pre-training example per corpus document (seeded from
/// train.seed and the document index) into a binary example cache; with
/// `dump`, also writes the readable dump. Returns the example count.
std::size_t make_pretrain_data(const RunConfig& config, const std::filesystem::path& out,
                               const std::filesystem::path& dump = {});

/// Writes vocab.txt, train.tsv and test.tsv ("source<TAB>target" text) into
/// `dir`, plus test.src / test.ref with one side per line.
void make_toy_data(const ToyTaskConfig& task, std::size_t train_count, std::size_t test_count,
                   std::uint64_t seed, const std::filesystem::path& dir);

/// "source<TAB>target" lines. [EOS] is appended to each target. Throws
/// DataError on a line without a tab or with an empty target.
std::vector<PairedSequence> load_pairs(const std::filesystem::path& path, const text::Vocab& vocab,
                                       const text::EncodeOptions& options);

/// Lines as stored, blank lines included; a trailing '\r' is dropped.
std::vector<std::string> read_all_lines(const std::filesystem::path& path);

struct RunSummary {
  std::uint64_t steps = 0;
  StepRecord last;
  std::filesystem::path model_path;
};

/// Pre-training. Data comes from paths.data (a .tsv of pairs, or an example
/// cache) or else from paths.corpus with fresh fragment sampling each step.
/// Writes into the run directory paths.checkpoint; with `resume`, continues
/// from its state file when present. `log` (optional) receives progress.
RunSummary run_pretrain(const RunConfig& config, bool resume, std::ostream* log = nullptr);

/// Fine-tuning from paths.init_checkpoint on the pairs in paths.data, in
/// train.finetune_mode with λ = train.finetune_lambda.
RunSummary run_finetune(const RunConfig& config, bool resume, std::ostream* log = nullptr);

/// Loads model parameters from a checkpoint file or a run directory.
model::ModelParams load_model(const std::filesystem::path& path);

/// Decodes every line of `input` into one line of `output`. Returns the line
/// count.
std::size_t run_decode(const RunConfig& config, const std::filesystem::path& input,
                       const std::filesystem::path& output);

/// Throws DataError when the files differ in line count.
metrics::ScoreReport run_eval(const std::filesystem::path& hypotheses,
                              const std::filesystem::path& references,
                              std::span<const std::string> metric_names);

/// Attention diagnostic over at most `max_examples` pairs from paths.data.
std::vector<AttentionRow> run_attention_analysis(const RunConfig& config,
                                                 std::span<const double> rates,
                                                 std::size_t max_examples);

/// Prints the contextual, word and span masks for one layout.
void dump_masks(std::ostream& out, std::size_t source_len, std::size_t target_len,
                std::span<const std::size_t> span_starts);

}  // namespace infillgen::harness
