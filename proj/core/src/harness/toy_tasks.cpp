// SPDX-License-Identifier: Apache-2.0
#include "infillgen/harness/toy_tasks.hpp"

#include <algorithm>
#include <random>

#include "infillgen/error.hpp"

namespace infillgen::harness {

ToyTask parse_toy_task(std::string_view name) {
  if (name == "copy") return ToyTask::kCopy;
  if (name == "reverse") return ToyTask::kReverse;
  if (name == "headline") return ToyTask::kHeadline;
  throw UsageError("unknown toy task '" + std::string(name) + "' (copy, reverse, headline)");
}

std::string_view toy_task_name(ToyTask task) {
  switch (task) {
    case ToyTask::kCopy: return "copy";
    case ToyTask::kReverse: return "reverse";
    case ToyTask::kHeadline: return "headline";
  }
  return "unknown";
}

void ToyTaskConfig::validate() const {
  if (vocab_size < text::special::kFirstRegular + 2) {
    throw UsageError("toy task: vocab_size leaves fewer than two regular ids");
  }
  if (min_length == 0 || min_length > max_length) {
    throw UsageError("toy task: need 1 <= min_length <= max_length");
  }
  if (task == ToyTask::kHeadline && headline_tokens == 0) {
    throw UsageError("toy task: headline_tokens must be positive");
  }
}

std::vector<TokenId> toy_target(const ToyTaskConfig& config, std::span<const TokenId> source) {
  std::vector<TokenId> target;
  switch (config.task) {
    case ToyTask::kCopy:
      target.assign(source.begin(), source.end());
      break;
    case ToyTask::kReverse:
      target.assign(source.rbegin(), source.rend());
      break;
    case ToyTask::kHeadline: {
      const std::size_t salient_from =
          text::special::kFirstRegular + (config.vocab_size - text::special::kFirstRegular) / 2;
      for (TokenId t : source) {
        if (t >= salient_from && target.size() < config.headline_tokens) target.push_back(t);
      }
      break;
    }
  }
  target.push_back(text::special::kEos);
  return target;
}

std::vector<ToyPair> generate_toy_pairs(const ToyTaskConfig& config, std::size_t count,
                                        std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length(config.min_length, config.max_length);
  std::uniform_int_distribution<TokenId> token(text::special::kFirstRegular,
                                               static_cast<TokenId>(config.vocab_size - 1));
  std::vector<ToyPair> pairs(count);
  for (ToyPair& pair : pairs) {
    pair.source.resize(length(rng));
    for (TokenId& t : pair.source) t = token(rng);
    pair.target = toy_target(config, pair.source);
  }
  return pairs;
}

text::Vocab toy_vocab(std::size_t vocab_size) {
  std::vector<std::string> tokens;
  for (std::size_t id = text::special::kFirstRegular; id < vocab_size; ++id) {
    tokens.push_back("w" + std::to_string(id));
  }
  return text::Vocab::from_tokens(tokens);
}

}  // namespace infillgen::harness
