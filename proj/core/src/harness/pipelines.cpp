// SPDX-License-Identifier: Apache-2.0
#include "infillgen/harness/pipelines.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "infillgen/binary_io.hpp"
#include "infillgen/decode/decoder.hpp"
#include "infillgen/error.hpp"
#include "infillgen/model/masks.hpp"
#include "infillgen/random.hpp"
#include "infillgen/tensor/checkpoint.hpp"
#include "infillgen/text/corpus.hpp"

namespace infillgen::harness {

namespace fs = std::filesystem;
using text::TokenId;

namespace {

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.digest();
}

void require_path(const std::string& value, const char* key) {
  if (value.empty()) throw UsageError(std::string("missing path: ") + key);
}

/// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / kLockFile) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw UsageError("run directory " + dir.string() + " is locked by another run (" +
                       path_.string() + ")");
    }
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

struct TrainingData {
  ExampleFactory factory;
  std::size_t size = 0;
  std::uint64_t hash = 0;
  std::string description;
};

std::vector<std::string> log_lines_up_to(const fs::path& path, std::uint64_t step) {
  std::vector<std::string> kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.starts_with("step\t")) {
      kept.push_back(line);
      continue;
    }
    if (std::stoull(line.substr(0, line.find('\t'))) <= step) kept.push_back(line);
  }
  return kept;
}

RunSummary run_training(const RunConfig& config, const char* command, model::ModelParams init,
                        TrainingData data, double lambda, bool resume, std::ostream* log) {
  require_path(config.paths.checkpoint, "paths.checkpoint");
  const fs::path dir = config.paths.checkpoint;
  fs::create_directories(dir);
  RunLock lock(dir);

  TrainerOptions options;
  options.optimizer = config.resolved_optimizer();
  options.lambda = lambda;
  options.label_smoothing = config.train.label_smoothing;
  options.batch_size = config.train.batch_size;
  options.seed = config.train.seed;
  options.dump_dir = dir;

  nlohmann::json manifest;
  manifest["command"] = command;
  manifest["config"] = to_json(config);
  manifest["config"]["model"] = init.config;
  manifest["resolved"] = {{"lambda", lambda},
                          {"warmup_steps", options.optimizer.warmup_steps},
                          {"total_steps", options.optimizer.total_steps},
                          {"noise_vocab_size", config.resolved_noise().vocab_size},
                          {"seed", options.seed},
                          {"data", data.description},
                          {"data_hash", data.hash},
                          {"dataset_size", data.size},
                          {"parameters", init.parameter_count()}};

  const fs::path state_path = dir / kStateFile;
  const fs::path log_path = dir / kLogFile;
  std::optional<Trainer> trainer;
  std::vector<std::string> previous_log;
  if (resume && fs::exists(state_path)) {
    trainer.emplace(Trainer::resume(tensor::load_checkpoint(state_path), options, data.factory,
                                    data.size));
    previous_log = log_lines_up_to(log_path, trainer->completed_steps());
    manifest["resumed_from_step"] = trainer->completed_steps();
  } else {
    trainer.emplace(std::move(init), options, data.factory, data.size);
  }
  {
    std::ofstream m(dir / kManifestFile);
    m << manifest.dump(2) << '\n';
  }

  std::ofstream tsv(log_path, std::ios::trunc);
  if (previous_log.empty()) {
    tsv << "step\tword_loss\tspan_loss\ttotal\tlearning_rate\twall_seconds\n";
  } else {
    for (const std::string& line : previous_log) tsv << line << '\n';
  }

  const auto save = [&] {
    tensor::save_checkpoint(state_path, trainer->state_checkpoint());
    tensor::save_checkpoint(dir / kModelFile, trainer->params().to_checkpoint());
  };

  RunSummary summary;
  double wall = 0.0;
  char buf[256];
  while (trainer->completed_steps() < config.train.steps) {
    const StepRecord r = trainer->step();
    wall += r.wall_seconds;
    summary.last = r;
    const bool last = r.step == config.train.steps;
    if (config.train.log_every == 0 || r.step % config.train.log_every == 0 || last) {
      std::snprintf(buf, sizeof buf, "%llu\t%.17g\t%.17g\t%.17g\t%.6g\t%.3f",
                    static_cast<unsigned long long>(r.step), r.word_loss, r.span_loss, r.total,
                    r.learning_rate, wall);
      tsv << buf << '\n' << std::flush;
      if (log) {
        std::snprintf(buf, sizeof buf, "step %llu  word %.4f  span %.4f  total %.4f  lr %.3g\n",
                      static_cast<unsigned long long>(r.step), r.word_loss, r.span_loss, r.total,
                      r.learning_rate);
        *log << buf << std::flush;
      }
    }
    if (config.train.checkpoint_every > 0 && r.step % config.train.checkpoint_every == 0) save();
  }
  save();
  summary.steps = trainer->completed_steps();
  summary.model_path = dir / kModelFile;
  return summary;
}

text::Vocab load_vocab(const RunConfig& config) {
  require_path(config.paths.vocab, "paths.vocab");
  return text::Vocab::load(config.paths.vocab);
}

std::vector<std::vector<TokenId>> load_documents(const RunConfig& config, const text::Vocab& vocab,
                                                 std::size_t max_tokens) {
  require_path(config.paths.corpus, "paths.corpus");
  text::EncodeOptions opts = encode_options(config);
  if (max_tokens > 0 && (opts.max_length == 0 || opts.max_length > max_tokens)) {
    opts.max_length = max_tokens;
  }
  text::LoadedCorpus corpus = text::load_corpus(config.paths.corpus, vocab, opts);
  std::vector<std::vector<TokenId>> docs;
  for (text::Document& d : corpus.documents) docs.push_back(std::move(d.tokens));
  return docs;
}

std::optional<spans::SpanVocab> maybe_span_vocab(const RunConfig& config) {
  if (config.paths.span_vocab.empty()) return std::nullopt;
  return spans::SpanVocab::load(config.paths.span_vocab);
}

model::ModelParams initial_params(const RunConfig& config) {
  if (!config.paths.init_checkpoint.empty()) return load_model(config.paths.init_checkpoint);
  return model::ModelParams::initialize(config.model, derive_seed(config.train.seed, 1));
}

}  // namespace

text::EncodeOptions encode_options(const RunConfig& config) {
  return text::EncodeOptions{config.train.lowercase, config.train.max_length};
}

std::size_t build_vocab_file(const RunConfig& config, const fs::path& out) {
  require_path(config.paths.corpus, "paths.corpus");
  const std::vector<std::string> lines = text::read_lines(config.paths.corpus);
  const text::Vocab vocab = text::build_vocab(lines, config.train.vocab_min_count,
                                              config.train.vocab_max_size, config.train.lowercase);
  vocab.save(out);
  return vocab.size();
}

spans::SpanVocab build_span_vocab_file(const RunConfig& config, const fs::path& out,
                                       spans::SpanVocabLimits limits) {
  const text::Vocab vocab = load_vocab(config);
  const std::vector<std::vector<TokenId>> docs = load_documents(config, vocab, 0);
  spans::SpanVocab sv = spans::build_span_vocab(spans::count_ngrams(docs), limits);
  sv.save(out);
  return sv;
}

std::size_t make_pretrain_data(const RunConfig& config, const fs::path& out, const fs::path& dump) {
  config.validate();
  const text::Vocab vocab = load_vocab(config);
  const std::optional<spans::SpanVocab> sv = maybe_span_vocab(config);
  const std::vector<std::vector<TokenId>> docs =
      load_documents(config, vocab, config.model.max_positions);
  std::vector<data::TrainingExample> examples;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].size() < 2) continue;
    examples.push_back(data::assemble_example(docs[i], sv ? &*sv : nullptr, config.fragments,
                                              config.resolved_noise(),
                                              derive_seed(config.train.seed, i)));
  }
  data::save_examples(out, examples);
  if (!dump.empty()) {
    std::ofstream d(dump);
    for (const data::TrainingExample& ex : examples) {
      data::dump_example_text(d, ex);
      d << '\n';
    }
  }
  return examples.size();
}

void make_toy_data(const ToyTaskConfig& task, std::size_t train_count, std::size_t test_count,
                   std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  const text::Vocab vocab = toy_vocab(task.vocab_size);
  vocab.save(dir / "vocab.txt");
  const auto text_of = [&](const std::vector<TokenId>& ids) { return vocab.decode(ids, true); };
  const auto write = [&](const fs::path& name, std::size_t count, std::uint64_t s) {
    std::ofstream tsv(dir / name);
    std::ofstream src, ref;
    if (name == "test.tsv") {
      src.open(dir / "test.src");
      ref.open(dir / "test.ref");
    }
    for (const ToyPair& p : generate_toy_pairs(task, count, s)) {
      tsv << text_of(p.source) << '\t' << text_of(p.target) << '\n';
      if (src.is_open()) {
        src << text_of(p.source) << '\n';
        ref << text_of(p.target) << '\n';
      }
    }
  };
  write("train.tsv", train_count, derive_seed(seed, 1));
  write("test.tsv", test_count, derive_seed(seed, 2));
}

std::vector<std::string> read_all_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<PairedSequence> load_pairs(const fs::path& path, const text::Vocab& vocab,
                                       const text::EncodeOptions& options) {
  const std::vector<std::string> lines = read_all_lines(path);
  std::vector<PairedSequence> pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected source<TAB>target");
    }
    PairedSequence p;
    p.source = vocab.encode(std::string_view(lines[i]).substr(0, tab), options);
    p.target = vocab.encode(std::string_view(lines[i]).substr(tab + 1), options);
    p.target.push_back(text::special::kEos);
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw DataError(path.string() + ": no pairs");
  return pairs;
}

RunSummary run_pretrain(const RunConfig& config, bool resume, std::ostream* log) {
  config.validate();
  model::ModelParams init = initial_params(config);
  const data::NoiseConfig noise = [&] {
    data::NoiseConfig n = config.noise;
    if (n.vocab_size == 0) n.vocab_size = static_cast<TokenId>(init.config.vocab_size);
    return n;
  }();
  const std::optional<spans::SpanVocab> sv = maybe_span_vocab(config);
  auto span_vocab = std::make_shared<std::optional<spans::SpanVocab>>(sv);

  TrainingData data;
  if (!config.paths.data.empty() && fs::path(config.paths.data).extension() == ".tsv") {
    const text::Vocab vocab = load_vocab(config);
    auto pairs = std::make_shared<std::vector<PairedSequence>>(
        load_pairs(config.paths.data, vocab, encode_options(config)));
    data.size = pairs->size();
    data.hash = file_hash(config.paths.data);
    data.description = "pairs:" + config.paths.data;
    data.factory = [pairs, span_vocab, noise](std::size_t i, std::uint64_t seed) {
      const PairedSequence& p = (*pairs)[i];
      return data::assemble_pair(p.source, p.target, *span_vocab ? &**span_vocab : nullptr,
                                 data::CorruptionMode::kNoising, noise, seed);
    };
  } else if (!config.paths.data.empty()) {
    auto examples = std::make_shared<std::vector<data::TrainingExample>>(
        data::load_examples(config.paths.data));
    if (examples->empty()) throw DataError(config.paths.data + ": no examples");
    data.size = examples->size();
    data.hash = file_hash(config.paths.data);
    data.description = "examples:" + config.paths.data;
    data.factory = [examples](std::size_t i, std::uint64_t) { return (*examples)[i]; };
  } else {
    const text::Vocab vocab = load_vocab(config);
    std::vector<std::vector<TokenId>> loaded = load_documents(config, vocab, init.config.max_positions);
    auto docs = std::make_shared<std::vector<std::vector<TokenId>>>();
    for (auto& d : loaded)
      if (d.size() >= 2) docs->push_back(std::move(d));
    if (docs->empty()) throw DataError(config.paths.corpus + ": no document with two tokens");
    data.size = docs->size();
    data.hash = file_hash(config.paths.corpus);
    data.description = "corpus:" + config.paths.corpus;
    data.factory = [docs, span_vocab, noise, fragments = config.fragments](std::size_t i,
                                                                         std::uint64_t seed) {
      return data::assemble_example((*docs)[i], *span_vocab ? &**span_vocab : nullptr, fragments,
                                    noise, seed);
    };
  }
  const double lambda = init.config.lambda;
  return run_training(config, "pretrain", std::move(init), std::move(data), lambda, resume, log);
}

RunSummary run_finetune(const RunConfig& config, bool resume, std::ostream* log) {
  config.validate();
  require_path(config.paths.init_checkpoint, "paths.init_checkpoint");
  require_path(config.paths.data, "paths.data");
  model::ModelParams init = load_model(config.paths.init_checkpoint);
  const text::Vocab vocab = load_vocab(config);
  auto pairs = std::make_shared<std::vector<PairedSequence>>(
      load_pairs(config.paths.data, vocab, encode_options(config)));
  data::NoiseConfig noise = config.noise;
  noise.rate = config.train.finetune_rate;
  if (noise.vocab_size == 0) noise.vocab_size = static_cast<TokenId>(init.config.vocab_size);
  const data::CorruptionMode mode = config.train.finetune_mode == "masking"
                                        ? data::CorruptionMode::kMasking
                                        : data::CorruptionMode::kNoising;
  const std::optional<spans::SpanVocab> sv = maybe_span_vocab(config);
  auto span_vocab = std::make_shared<std::optional<spans::SpanVocab>>(sv);

  TrainingData data;
  data.size = pairs->size();
  data.hash = file_hash(config.paths.data);
  data.description = "pairs:" + config.paths.data;
  data.factory = [pairs, span_vocab, noise, mode](std::size_t i, std::uint64_t seed) {
    const PairedSequence& p = (*pairs)[i];
    return data::assemble_pair(p.source, p.target, *span_vocab ? &**span_vocab : nullptr, mode,
                               noise, seed);
  };
  return run_training(config, "finetune", std::move(init), std::move(data),
                      config.train.finetune_lambda, resume, log);
}

model::ModelParams load_model(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kModelFile : path;
  return model::ModelParams::from_checkpoint(tensor::load_checkpoint(file));
}

std::size_t run_decode(const RunConfig& config, const fs::path& input, const fs::path& output) {
  require_path(config.paths.checkpoint, "paths.checkpoint");
  config.decode.validate();
  const model::ModelParams model = load_model(config.paths.checkpoint);
  const text::Vocab vocab = load_vocab(config);
  if (vocab.size() > model.config.vocab_size) {
    throw DataError("vocabulary has " + std::to_string(vocab.size()) +
                    " entries but the model only " + std::to_string(model.config.vocab_size));
  }
  text::EncodeOptions opts = encode_options(config);
  opts.max_length = model.config.max_positions - 1;
  const std::vector<std::string> lines = read_all_lines(input);
  std::ofstream out(output);
  if (!out) throw DataError("cannot write " + output.string());
  for (const std::string& line : lines) {
    const std::vector<TokenId> source = vocab.encode(line, opts);
    const decode::Hypothesis best = decode::decode(model, source, config.decode);
    out << vocab.decode(best.tokens, true) << '\n';
  }
  return lines.size();
}

metrics::ScoreReport run_eval(const fs::path& hypotheses, const fs::path& references,
                              std::span<const std::string> metric_names) {
  const std::vector<std::string> hyp = read_all_lines(hypotheses);
  const std::vector<std::string> ref = read_all_lines(references);
  if (hyp.size() != ref.size()) {
    throw DataError("line count mismatch: " + std::to_string(hyp.size()) + " hypotheses vs " +
                    std::to_string(ref.size()) + " references");
  }
  std::vector<metrics::EvalPair> pairs;
  pairs.reserve(hyp.size());
  for (std::size_t i = 0; i < hyp.size(); ++i) pairs.push_back(metrics::make_pair(hyp[i], ref[i]));
  return metrics::evaluate(pairs, metric_names);
}

std::vector<AttentionRow> run_attention_analysis(const RunConfig& config,
                                                 std::span<const double> rates,
                                                 std::size_t max_examples) {
  require_path(config.paths.checkpoint, "paths.checkpoint");
  require_path(config.paths.data, "paths.data");
  const model::ModelParams model = load_model(config.paths.checkpoint);
  const text::Vocab vocab = load_vocab(config);
  std::vector<PairedSequence> pairs = load_pairs(config.paths.data, vocab, encode_options(config));
  if (max_examples > 0 && pairs.size() > max_examples) pairs.resize(max_examples);
  data::NoiseConfig noise = config.noise;
  if (noise.vocab_size == 0) noise.vocab_size = static_cast<TokenId>(model.config.vocab_size);
  return analyze_attention(model, pairs, rates, noise, config.train.seed);
}

void dump_masks(std::ostream& out, std::size_t source_len, std::size_t target_len,
                std::span<const std::size_t> span_starts) {
  model::MaskLayout layout;
  layout.source_len = source_len;
  layout.target_len = target_len;
  layout.spans.length = target_len;
  if (span_starts.empty()) {
    layout.spans = spans::SpanBoundaries::unigrams(target_len);
  } else {
    layout.spans.starts.assign(span_starts.begin(), span_starts.end());
  }
  const model::FlowMasks masks = model::build_masks(layout);
  out << "# contextual (" << masks.contextual.rows() << " x " << masks.contextual.cols() << ")\n";
  model::write_mask_grid(out, masks.contextual);
  out << "# word (" << masks.word.rows() << " x " << masks.word.cols() << ")\n";
  model::write_mask_grid(out, masks.word);
  out << "# span (" << masks.span.rows() << " x " << masks.span.cols() << ")\n";
  model::write_mask_grid(out, masks.span);
}

}  // namespace infillgen::harness
