// SPDX-License-Identifier: Apache-2.0
#include "infillgen/text/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "infillgen/error.hpp"

namespace infillgen::text {

std::string lowercase_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> pieces;
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) pieces.push_back(text.substr(start, i - start));
  }
  return pieces;
}

Vocab::Vocab() {
  for (std::string_view t : kReservedTokens) {
    index_.emplace(std::string(t), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> regular) {
  Vocab vocab;
  for (std::string& t : regular) {
    if (t.empty()) throw UsageError("vocab: empty token");
    if (!vocab.index_.emplace(t, static_cast<TokenId>(vocab.tokens_.size())).second) {
      throw UsageError("vocab: duplicate or reserved token '" + t + "'");
    }
    vocab.tokens_.push_back(std::move(t));
  }
  return vocab;
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::lookup(std::string_view token) const {
  return find(token).value_or(special::kUnk);
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw UsageError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<TokenId> Vocab::encode(std::string_view text, const EncodeOptions& options) const {
  const std::string lowered = options.lowercase ? lowercase_ascii(text) : std::string(text);
  std::vector<TokenId> ids;
  for (std::string_view piece : split_whitespace(lowered)) {
    if (options.max_length != 0 && ids.size() == options.max_length) break;
    ids.push_back(lookup(piece));
  }
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids, bool skip_special) const {
  std::string out;
  for (TokenId id : ids) {
    if (skip_special && id < special::kFirstRegular) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("vocab: cannot write " + path.string());
  for (std::size_t i = special::kFirstRegular; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("vocab: cannot read " + path.string());
  std::vector<std::string> regular;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    regular.push_back(line);
  }
  try {
    return from_tokens(std::move(regular));
  } catch (const UsageError& e) {
    throw DataError(std::string(e.what()) + " in " + path.string());
  }
}

Vocab build_vocab(std::span<const std::string> corpus, std::size_t min_count, std::size_t max_size,
                  bool lowercase) {
  std::map<std::string, std::size_t> counts;
  for (const std::string& line : corpus) {
    const std::string text = lowercase ? lowercase_ascii(line) : line;
    for (std::string_view piece : split_whitespace(text)) ++counts[std::string(piece)];
  }
  if (counts.empty()) throw UsageError("build_vocab: corpus holds no tokens");

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, count] : counts) {
    const bool reserved =
        std::find(std::begin(kReservedTokens), std::end(kReservedTokens), token) !=
        std::end(kReservedTokens);
    if (count >= min_count && !reserved) ranked.emplace_back(token, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size != 0 && ranked.size() > max_size) ranked.resize(max_size);

  std::vector<std::string> regular;
  regular.reserve(ranked.size());
  for (auto& [token, count] : ranked) regular.push_back(std::move(token));
  return Vocab::from_tokens(std::move(regular));
}

}  // namespace infillgen::text
