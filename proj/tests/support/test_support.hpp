// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fixtures shared by the unit and acceptance tests.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "infillgen/data/example.hpp"
#include "infillgen/model/params.hpp"
#include "infillgen/spans/span_vocab.hpp"
#include "infillgen/text/vocab.hpp"

namespace infillgen::testing {

using text::TokenId;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("infillgen_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Small random model; large init so attention is far from uniform.
inline model::ModelConfig tiny_config(std::mt19937_64& rng, std::size_t layers = 0) {
  model::ModelConfig c;
  c.layers = layers ? layers : uniform(rng, 1, 2);
  c.heads = uniform(rng, 1, 2);
  c.hidden = c.heads * uniform(rng, 2, 4);
  c.ffn = uniform(rng, 4, 10);
  c.vocab_size = uniform(rng, 9, 14);
  c.max_positions = 40;
  c.dropout = 0.0;
  c.init_std = 0.5;
  return c;
}

/// Model with every parameter, biases and gains included, drawn at random.
inline model::ModelParams random_model(const model::ModelConfig& config, std::uint64_t seed) {
  model::ModelParams p = model::ModelParams::initialize(config, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const std::string& name = p.names[i];
    if (name.find("bias") != std::string::npos || name.find("gain") != std::string::npos) {
      for (double& v : p.values[i].data()) v += jitter(rng);
    }
  }
  return p;
}

inline std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n,
                                          std::size_t vocab_size) {
  std::vector<TokenId> out(n);
  for (TokenId& t : out) {
    t = static_cast<TokenId>(uniform(rng, text::special::kFirstRegular, vocab_size - 1));
  }
  return out;
}

/// Random tiling of [0, length) into spans of 1..max_span tokens.
inline spans::SpanBoundaries random_spans(std::mt19937_64& rng, std::size_t length,
                                          std::size_t max_span = spans::kMaxOrder) {
  spans::SpanBoundaries b;
  b.length = length;
  std::size_t cursor = 0;
  while (cursor < length) {
    b.starts.push_back(cursor);
    cursor += std::min(length - cursor, uniform(rng, 1, max_span));
  }
  return b;
}

/// Example with the given source, clean target (used as input too) and spans.
inline data::TrainingExample make_example(std::vector<TokenId> source, std::vector<TokenId> target,
                                          spans::SpanBoundaries spans) {
  data::TrainingExample ex;
  ex.s_prime = std::move(source);
  ex.t_clean = target;
  ex.t_noised = std::move(target);
  ex.corrupted.assign(ex.t_clean.size(), 0);
  ex.loss_mask.assign(ex.t_clean.size(), 1);
  ex.spans = std::move(spans);
  data::fill_layout(ex);
  return ex;
}

inline data::TrainingExample random_example(std::mt19937_64& rng, std::size_t vocab_size,
                                            std::size_t max_source, std::size_t max_target) {
  const std::size_t s = uniform(rng, 1, max_source);
  const std::size_t t = uniform(rng, 1, max_target);
  return make_example(random_tokens(rng, s, vocab_size), random_tokens(rng, t, vocab_size),
                      random_spans(rng, t));
}

}  // namespace infillgen::testing
