// SPDX-License-Identifier: Apache-2.0
#include "infillgen/data/example.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <random>

#include "infillgen/binary_io.hpp"
#include "infillgen/error.hpp"
#include "infillgen/random.hpp"

namespace infillgen::data {

void FragmentSamplingConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("fragments: gamma must be in (0, 1)");
  if (distributions.empty()) throw UsageError("fragments: no length distributions");
  double total = 0.0;
  for (const LengthDistribution& d : distributions) {
    if (d.low < 1 || d.low > d.high) throw UsageError("fragments: require 1 <= low <= high");
    if (d.probability < 0.0) throw UsageError("fragments: negative probability");
    total += d.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("fragments: probabilities must sum to 1");
}

FragmentSample sample_fragments(std::span<const TokenId> s, const FragmentSamplingConfig& config,
                                std::uint64_t seed) {
  config.validate();
  const std::size_t n = s.size();
  if (n < 2) throw UsageError("sample_fragments: input needs at least 2 tokens");
  std::size_t budget = static_cast<std::size_t>(std::floor(config.gamma * static_cast<double>(n)));
  if (budget == 0) budget = 1;

  std::mt19937_64 rng(seed);
  FragmentSample sample;
  {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cumulative = 0.0;
    sample.distribution = config.distributions.size() - 1;
    for (std::size_t i = 0; i < config.distributions.size(); ++i) {
      cumulative += config.distributions[i].probability;
      if (u < cumulative) {
        sample.distribution = i;
        break;
      }
    }
  }
  const LengthDistribution& dist = config.distributions[sample.distribution];

  std::vector<std::uint8_t> taken(n, 0);
  std::vector<std::size_t> taken_prefix(n + 1, 0);
  std::vector<std::size_t> feasible;
  std::size_t spent = 0;
  while (spent < budget) {
    std::size_t len = std::uniform_int_distribution<std::size_t>(dist.low, dist.high)(rng);
    len = std::min({len, budget - spent, n});
    for (std::size_t i = 0; i < n; ++i) taken_prefix[i + 1] = taken_prefix[i] + taken[i];
    for (;;) {
      feasible.clear();
      for (std::size_t start = 0; start + len <= n; ++start) {
        if (taken_prefix[start + len] == taken_prefix[start]) feasible.push_back(start);
      }
      if (!feasible.empty()) break;
      --len;  // a free cell always exists while spent < budget < n
    }
    const std::size_t pick =
        std::uniform_int_distribution<std::size_t>(0, feasible.size() - 1)(rng);
    const std::size_t start = feasible[pick];
    std::fill_n(taken.begin() + static_cast<std::ptrdiff_t>(start), len, std::uint8_t{1});
    sample.fragments.push_back({start, len});
    spent += len;
  }

  std::sort(sample.fragments.begin(), sample.fragments.end(),
            [](const FragmentSpan& a, const FragmentSpan& b) { return a.start < b.start; });
  for (const FragmentSpan& f : sample.fragments) {
    sample.t_clean.insert(sample.t_clean.end(), s.begin() + static_cast<std::ptrdiff_t>(f.start),
                          s.begin() + static_cast<std::ptrdiff_t>(f.start + f.length));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!taken[i]) sample.s_prime.push_back(s[i]);
  }
  return sample;
}

void NoiseConfig::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("noise: rate must be in [0, 1]");
  if (rate > 0.0 && vocab_size <= first_candidate) {
    throw UsageError("noise: no candidate replacement ids");
  }
}

NoisedSequence apply_noise(std::span<const TokenId> t, const NoiseConfig& config,
                           std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  NoisedSequence out{std::vector<TokenId>(t.begin(), t.end()), std::vector<std::uint8_t>(t.size(), 0)};
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (coin(rng) < config.rate) {
      out.tokens[i] =
          std::uniform_int_distribution<TokenId>(config.first_candidate, config.vocab_size - 1)(rng);
      out.replaced[i] = 1;
    }
  }
  return out;
}

NoisedSequence apply_masking(std::span<const TokenId> t, double probability, std::uint64_t seed) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw UsageError("masking: probability must be in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  NoisedSequence out{std::vector<TokenId>(t.begin(), t.end()), std::vector<std::uint8_t>(t.size(), 0)};
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (coin(rng) < probability) {
      out.tokens[i] = text::special::kMask;
      out.replaced[i] = 1;
    }
  }
  return out;
}

void fill_layout(TrainingExample& example) {
  const std::size_t total = example.token_count();
  example.positions.resize(total);
  example.segments.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    example.positions[i] = static_cast<std::uint32_t>(i);
    example.segments[i] = i < example.s_prime.size() ? 0 : 1;
  }
}

namespace {

spans::SpanBoundaries segment_or_unigrams(std::span<const TokenId> t,
                                          const spans::SpanVocab* span_vocab) {
  if (t.empty()) return {};
  return span_vocab ? spans::segment_spans(t, *span_vocab) : spans::SpanBoundaries::unigrams(t.size());
}

}  // namespace

TrainingExample assemble_example(std::span<const TokenId> s, const spans::SpanVocab* span_vocab,
                                 const FragmentSamplingConfig& fragment_config,
                                 const NoiseConfig& noise_config, std::uint64_t seed) {
  FragmentSample sample = sample_fragments(s, fragment_config, derive_seed(seed, 1));
  NoisedSequence noised = apply_noise(sample.t_clean, noise_config, derive_seed(seed, 2));
  TrainingExample ex;
  ex.s_prime = std::move(sample.s_prime);
  ex.t_clean = std::move(sample.t_clean);
  ex.t_noised = std::move(noised.tokens);
  ex.fragments = std::move(sample.fragments);
  ex.distribution = sample.distribution;
  ex.corrupted = std::move(noised.replaced);
  ex.loss_mask.assign(ex.t_clean.size(), 1);
  ex.spans = segment_or_unigrams(ex.t_noised, span_vocab);
  fill_layout(ex);
  return ex;
}

TrainingExample assemble_pair(std::span<const TokenId> source, std::span<const TokenId> target,
                              const spans::SpanVocab* span_vocab, CorruptionMode mode,
                              const NoiseConfig& noise_config, std::uint64_t seed) {
  if (target.empty()) throw UsageError("assemble_pair: empty target");
  NoisedSequence corrupted = mode == CorruptionMode::kNoising
                                 ? apply_noise(target, noise_config, derive_seed(seed, 2))
                                 : apply_masking(target, noise_config.rate, derive_seed(seed, 2));
  TrainingExample ex;
  ex.s_prime.assign(source.begin(), source.end());
  ex.t_clean.assign(target.begin(), target.end());
  ex.t_noised = std::move(corrupted.tokens);
  ex.corrupted = std::move(corrupted.replaced);
  ex.loss_mask = mode == CorruptionMode::kNoising ? std::vector<std::uint8_t>(target.size(), 1)
                                                  : ex.corrupted;
  ex.spans = segment_or_unigrams(ex.t_noised, span_vocab);
  fill_layout(ex);
  return ex;
}

std::size_t Batch::loss_positions() const {
  return static_cast<std::size_t>(std::count(loss_mask.data.begin(), loss_mask.data.end(), 1u));
}

Batch make_batch(std::vector<TrainingExample> examples) {
  Batch b;
  std::size_t max_x = 0, max_t = 0;
  for (const TrainingExample& ex : examples) {
    max_x = std::max(max_x, ex.token_count());
    max_t = std::max(max_t, ex.target_len());
  }
  const std::size_t rows = examples.size();
  b.tokens = IdMatrix(rows, max_x, text::special::kPad);
  b.positions = IdMatrix(rows, max_x);
  b.segments = IdMatrix(rows, max_x);
  b.word_queries = IdMatrix(rows, max_t, text::special::kPad);
  b.span_queries = IdMatrix(rows, max_t, text::special::kPad);
  b.query_positions = IdMatrix(rows, max_t);
  b.targets = IdMatrix(rows, max_t, text::special::kPad);
  b.loss_mask = IdMatrix(rows, max_t, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const TrainingExample& ex = examples[r];
    for (std::size_t i = 0; i < ex.token_count(); ++i) {
      b.tokens.at(r, i) = i < ex.source_len() ? ex.s_prime[i] : ex.t_noised[i - ex.source_len()];
      b.positions.at(r, i) = ex.positions[i];
      b.segments.at(r, i) = ex.segments[i];
    }
    for (std::size_t i = 0; i < ex.target_len(); ++i) {
      b.word_queries.at(r, i) = text::special::kAttn;
      b.span_queries.at(r, i) = text::special::kAttn;
      b.query_positions.at(r, i) = ex.query_position(i);
      b.targets.at(r, i) = ex.t_clean[i];
      b.loss_mask.at(r, i) = ex.loss_mask[i];
    }
    b.source_lengths.push_back(ex.source_len());
    b.target_lengths.push_back(ex.target_len());
  }
  b.examples = std::move(examples);
  return b;
}

std::vector<Batch> batch(std::vector<TrainingExample> examples, std::size_t max_tokens) {
  std::vector<Batch> batches;
  std::vector<TrainingExample> current;
  std::size_t current_max = 0;
  for (TrainingExample& ex : examples) {
    const std::size_t len = ex.token_count();
    if (len > max_tokens) {
      throw UsageError("batch: example of " + std::to_string(len) + " tokens exceeds max_tokens " +
                       std::to_string(max_tokens));
    }
    const std::size_t new_max = std::max(current_max, len);
    if (!current.empty() && new_max * (current.size() + 1) > max_tokens) {
      batches.push_back(make_batch(std::move(current)));
      current.clear();
      current_max = 0;
    }
    current_max = std::max(current_max, len);
    current.push_back(std::move(ex));
  }
  if (!current.empty()) batches.push_back(make_batch(std::move(current)));
  return batches;
}

namespace {

constexpr char kExampleMagic[8] = {'I', 'N', 'F', 'L', 'E', 'X', 'M', 'P'};
constexpr std::uint32_t kExampleVersion = 1;

template <typename T>
void write_ids(io::BinaryWriter& out, const std::vector<T>& values) {
  out.varint(values.size());
  for (T v : values) out.varint(v);
}

template <typename T>
std::vector<T> read_ids(io::BinaryReader& in) {
  std::vector<T> values(in.varint());
  for (T& v : values) v = static_cast<T>(in.varint());
  return values;
}

template <typename T>
void dump_line(std::ostream& out, const char* name, const std::vector<T>& values) {
  out << name << ':';
  for (T v : values) out << ' ' << static_cast<std::uint64_t>(v);
  out << '\n';
}

}  // namespace

void save_examples(const std::filesystem::path& path, const std::vector<TrainingExample>& examples) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("example cache: cannot write " + path.string());
  io::BinaryWriter out(file);
  out.bytes(kExampleMagic, sizeof kExampleMagic);
  out.u32(kExampleVersion);
  out.varint(examples.size());
  for (const TrainingExample& ex : examples) {
    write_ids(out, ex.s_prime);
    write_ids(out, ex.t_clean);
    write_ids(out, ex.t_noised);
    out.varint(ex.fragments.size());
    for (const FragmentSpan& f : ex.fragments) {
      out.varint(f.start);
      out.varint(f.length);
    }
    out.varint(ex.distribution);
    write_ids(out, ex.corrupted);
    write_ids(out, ex.loss_mask);
    write_ids(out, ex.spans.starts);
    write_ids(out, ex.positions);
    write_ids(out, ex.segments);
  }
}

std::vector<TrainingExample> load_examples(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("example cache: cannot read " + path.string());
  io::BinaryReader in(file);
  char magic[sizeof kExampleMagic];
  in.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kExampleMagic, sizeof magic) != 0) {
    throw DataError("example cache: bad magic in " + path.string());
  }
  if (in.u32() != kExampleVersion) throw DataError("example cache: unsupported version");
  std::vector<TrainingExample> examples(in.varint());
  for (TrainingExample& ex : examples) {
    ex.s_prime = read_ids<TokenId>(in);
    ex.t_clean = read_ids<TokenId>(in);
    ex.t_noised = read_ids<TokenId>(in);
    ex.fragments.resize(in.varint());
    for (FragmentSpan& f : ex.fragments) {
      f.start = in.varint();
      f.length = in.varint();
    }
    ex.distribution = in.varint();
    ex.corrupted = read_ids<std::uint8_t>(in);
    ex.loss_mask = read_ids<std::uint8_t>(in);
    ex.spans.starts = read_ids<std::size_t>(in);
    ex.spans.length = ex.t_noised.size();
    ex.positions = read_ids<std::uint32_t>(in);
    ex.segments = read_ids<std::uint32_t>(in);
    try {
      ex.spans.validate(0);
    } catch (const UsageError& e) {
      throw DataError(std::string("example cache: ") + e.what());
    }
  }
  return examples;
}

void dump_example_text(std::ostream& out, const TrainingExample& example) {
  dump_line(out, "s_prime", example.s_prime);
  dump_line(out, "t_clean", example.t_clean);
  dump_line(out, "t_noised", example.t_noised);
  out << "fragments:";
  for (const FragmentSpan& f : example.fragments) out << ' ' << f.start << '+' << f.length;
  out << '\n';
  out << "distribution: " << example.distribution << '\n';
  dump_line(out, "corrupted", example.corrupted);
  dump_line(out, "loss_mask", example.loss_mask);
  dump_line(out, "span_starts", example.spans.starts);
  dump_line(out, "positions", example.positions);
  dump_line(out, "segments", example.segments);
}

}  // namespace infillgen::data
