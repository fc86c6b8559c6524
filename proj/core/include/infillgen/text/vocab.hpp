// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace infillgen::text {

using TokenId = std::uint32_t;

/// Reserved ids, fixed so masks and tests can hard-code them.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kAttn = 4;
inline constexpr TokenId kMask = 5;
inline constexpr TokenId kFirstRegular = 6;
}  // namespace special

inline constexpr std::string_view kReservedTokens[] = {"[PAD]", "[BOS]", "[EOS]",
                                                       "[UNK]", "[ATTN]", "[MASK]"};

struct EncodeOptions {
  bool lowercase = true;
  /// Longer inputs are truncated; 0 disables truncation.
  std::size_t max_length = 512;
};

/// ASCII lowercasing; bytes >= 0x80 pass through untouched.
std::string lowercase_ascii(std::string_view text);
/// Splits on ASCII whitespace, dropping empty pieces.
std::vector<std::string_view> split_whitespace(std::string_view text);

/// Token <-> id table. Ids 0..5 are the reserved symbols; regular tokens
/// follow in the order they were supplied.
class Vocab {
 public:
  Vocab();
  /// Throws UsageError on duplicates or reserved names among `regular`.
  static Vocab from_tokens(std::vector<std::string> regular);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t regular_size() const noexcept { return tokens_.size() - special::kFirstRegular; }

  std::optional<TokenId> find(std::string_view token) const;
  /// find() with [UNK] fallback.
  TokenId lookup(std::string_view token) const;
  const std::string& token(TokenId id) const;

  std::vector<TokenId> encode(std::string_view text, const EncodeOptions& options = {}) const;
  /// Space-joined tokens. With `skip_special`, reserved ids are omitted.
  std::string decode(std::span<const TokenId> ids, bool skip_special = false) const;

  /// One regular token per line; line k holds id k + 6.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Counts whitespace tokens, keeps those seen at least `min_count` times,
/// orders by (-frequency, token) and keeps the first `max_size` (0 = all).
/// Throws UsageError when the corpus holds no tokens.
Vocab build_vocab(std::span<const std::string> corpus, std::size_t min_count, std::size_t max_size,
                  bool lowercase = true);

}  // namespace infillgen::text
