// SPDX-License-Identifier: Apache-2.0
// infillgen command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
// INFILLGEN_LOG=quiet silences progress output on stderr.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "infillgen/error.hpp"
#include "infillgen/harness/pipelines.hpp"

namespace ig = infillgen;
namespace h = infillgen::harness;

namespace {

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string corpus, vocab, span_vocab, data, checkpoint, init_checkpoint, output;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_file, "JSON run config")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides, "Override as section.key=value (repeatable)");
}

void add_paths(CLI::App* cmd, CommonArgs& args, std::initializer_list<const char*> which) {
  for (const std::string name : which) {
    if (name == "corpus") cmd->add_option("--corpus", args.corpus, "Text corpus, one document per line");
    if (name == "vocab") cmd->add_option("--vocab", args.vocab, "Vocabulary file");
    if (name == "span-vocab") cmd->add_option("--span-vocab", args.span_vocab, "Span vocabulary file");
    if (name == "data") cmd->add_option("--data", args.data, "Example cache or source<TAB>target file");
    if (name == "checkpoint") cmd->add_option("--checkpoint", args.checkpoint, "Run directory or checkpoint");
    if (name == "init") cmd->add_option("--init", args.init_checkpoint, "Initial checkpoint");
  }
}

h::RunConfig resolve(const CommonArgs& args) {
  h::RunConfig config = args.config_file.empty() ? h::RunConfig{} : h::load_run_config(args.config_file);
  for (const std::string& o : args.overrides) h::apply_override(config, o);
  const auto set = [](std::string& field, const std::string& value) {
    if (!value.empty()) field = value;
  };
  set(config.paths.corpus, args.corpus);
  set(config.paths.vocab, args.vocab);
  set(config.paths.span_vocab, args.span_vocab);
  set(config.paths.data, args.data);
  set(config.paths.checkpoint, args.checkpoint);
  set(config.paths.init_checkpoint, args.init_checkpoint);
  set(config.paths.output, args.output);
  return config;
}

std::ostream* progress() {
  const char* level = std::getenv("INFILLGEN_LOG");
  if (level != nullptr && std::string(level) == "quiet") return nullptr;
  return &std::cerr;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  for (char c : text + ",") {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else if (c != ' ') {
      item.push_back(c);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Infilling sequence-to-sequence pre-training toolkit"};
  app.require_subcommand(1);
  CommonArgs args;
  std::ostream* log = progress();

  auto* build_vocab = app.add_subcommand("build-vocab", "Build a vocabulary from a corpus");
  add_common(build_vocab, args);
  add_paths(build_vocab, args, {"corpus"});
  build_vocab->add_option("-o,--output", args.output, "Vocabulary file to write")->required();

  std::size_t bigram_top = 2000, trigram_top = 500;
  auto* build_spans = app.add_subcommand("build-spans", "Build the n-gram span vocabulary");
  add_common(build_spans, args);
  add_paths(build_spans, args, {"corpus", "vocab"});
  build_spans->add_option("-o,--output", args.output, "Span vocabulary file to write")->required();
  build_spans->add_option("--bigram-top", bigram_top, "Bigrams kept");
  build_spans->add_option("--trigram-top", trigram_top, "Trigrams kept");

  std::string task, dump_path;
  std::size_t train_count = 20000, test_count = 500, toy_vocab_size = 64, toy_max_len = 16;
  auto* make_data = app.add_subcommand("make-data", "Assemble training examples or a toy task");
  add_common(make_data, args);
  add_paths(make_data, args, {"corpus", "vocab", "span-vocab"});
  make_data->add_option("-o,--output", args.output, "Example cache, or directory for --task")->required();
  make_data->add_option("--task", task, "Toy task instead of a corpus: copy, reverse, headline");
  make_data->add_option("--dump", dump_path, "Also write a readable dump of the examples");
  make_data->add_option("--train-count", train_count, "Toy training pairs");
  make_data->add_option("--test-count", test_count, "Toy test pairs");
  make_data->add_option("--vocab-size", toy_vocab_size, "Toy vocabulary size (with reserved ids)");
  make_data->add_option("--max-length", toy_max_len, "Toy maximum source length");

  bool resume = false;
  auto* pretrain = app.add_subcommand("pretrain", "Multi-flow pre-training");
  add_common(pretrain, args);
  add_paths(pretrain, args, {"corpus", "vocab", "span-vocab", "data", "checkpoint", "init"});
  pretrain->add_flag("--resume", resume, "Continue from the run directory's state");

  auto* finetune = app.add_subcommand("finetune", "Fine-tuning in noising or masking mode");
  add_common(finetune, args);
  add_paths(finetune, args, {"vocab", "span-vocab", "data", "checkpoint", "init"});
  finetune->add_flag("--resume", resume, "Continue from the run directory's state");

  std::string input;
  auto* decode = app.add_subcommand("decode", "Decode one output line per input line");
  add_common(decode, args);
  add_paths(decode, args, {"vocab", "checkpoint"});
  decode->add_option("-i,--input", input, "Source lines")->required()->check(CLI::ExistingFile);
  decode->add_option("-o,--output", args.output, "Output file")->required();

  std::string hyp, ref, metric_list = "rouge-1,rouge-2,rouge-l,bleu-4,distinct-1,distinct-2", pairs_tsv;
  auto* evaluate = app.add_subcommand("evaluate", "Score hypotheses against references");
  evaluate->add_option("--hyp", hyp, "Hypothesis lines")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--ref", ref, "Reference lines")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--metrics", metric_list, "Comma-separated metric names");
  evaluate->add_option("--pairs-tsv", pairs_tsv, "Also write per-pair scores");
  evaluate->add_option("-o,--output", args.output, "Report file (default stdout)");

  std::vector<double> rates{0.0, 0.2, 0.5};
  std::size_t max_examples = 1000;
  auto* analyze = app.add_subcommand("analyze-attention", "Attention mass on source / clean / noised keys");
  add_common(analyze, args);
  add_paths(analyze, args, {"vocab", "data", "checkpoint"});
  analyze->add_option("--rates", rates, "Noise rates to probe")->delimiter(',');
  analyze->add_option("--max-examples", max_examples, "Pairs used per rate (0 = all)");
  analyze->add_option("-o,--output", args.output, "Report file (default stdout)");

  std::size_t source_len = 3, target_len = 4;
  std::vector<std::size_t> span_starts;
  auto* masks = app.add_subcommand("dump-masks", "Print the attention masks of one layout");
  masks->add_option("--source-len", source_len, "|S'|");
  masks->add_option("--target-len", target_len, "|T'|")->check(CLI::PositiveNumber);
  masks->add_option("--spans", span_starts, "Span start offsets, e.g. 0,2,3 (default unigrams)")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*build_vocab) {
      const h::RunConfig config = resolve(args);
      const std::size_t n = h::build_vocab_file(config, args.output);
      if (log) *log << "wrote " << n << " entries to " << args.output << '\n';
    } else if (*build_spans) {
      const h::RunConfig config = resolve(args);
      const ig::spans::SpanVocab sv =
          h::build_span_vocab_file(config, args.output, {bigram_top, trigram_top});
      if (log) {
        *log << "wrote " << sv.count_of_order(2) << " bigrams and " << sv.count_of_order(3)
             << " trigrams to " << args.output << '\n';
      }
    } else if (*make_data) {
      if (!task.empty()) {
        h::ToyTaskConfig toy;
        toy.task = h::parse_toy_task(task);
        toy.vocab_size = toy_vocab_size;
        toy.max_length = toy_max_len;
        const h::RunConfig config = resolve(args);
        h::make_toy_data(toy, train_count, test_count, config.train.seed, args.output);
        if (log) *log << "wrote " << task << " task files to " << args.output << '\n';
      } else {
        const h::RunConfig config = resolve(args);
        const std::size_t n = h::make_pretrain_data(config, args.output, dump_path);
        if (log) *log << "wrote " << n << " examples to " << args.output << '\n';
      }
    } else if (*pretrain || *finetune) {
      const h::RunConfig config = resolve(args);
      const h::RunSummary s = *pretrain ? h::run_pretrain(config, resume, log)
                                        : h::run_finetune(config, resume, log);
      if (log) *log << "finished " << s.steps << " steps; model at " << s.model_path.string() << '\n';
    } else if (*decode) {
      const h::RunConfig config = resolve(args);
      const std::size_t n = h::run_decode(config, input, args.output);
      if (log) *log << "decoded " << n << " lines into " << args.output << '\n';
    } else if (*evaluate) {
      const std::vector<std::string> names = split_list(metric_list);
      const ig::metrics::ScoreReport report = h::run_eval(hyp, ref, names);
      if (args.output.empty()) {
        report.write_text(std::cout);
      } else {
        std::ofstream out(args.output);
        report.write_text(out);
      }
      if (!pairs_tsv.empty()) {
        std::ofstream out(pairs_tsv);
        report.write_pairs_tsv(out);
      }
    } else if (*analyze) {
      const h::RunConfig config = resolve(args);
      const std::vector<h::AttentionRow> rows = h::run_attention_analysis(config, rates, max_examples);
      if (args.output.empty()) {
        h::write_attention_table(std::cout, rows);
      } else {
        std::ofstream out(args.output);
        h::write_attention_table(out, rows);
      }
    } else if (*masks) {
      h::dump_masks(std::cout, source_len, target_len, span_starts);
    }
  } catch (const ig::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const ig::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ig::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
