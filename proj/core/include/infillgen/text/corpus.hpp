// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "infillgen/text/vocab.hpp"

namespace infillgen::text {

bool is_valid_utf8(std::string_view bytes) noexcept;

struct TextLine {
  std::string id;  // 1-based line number in the source file
  std::string text;
};

/// Streams one document per line. Lines that are not valid UTF-8 are skipped
/// and counted; blank lines are skipped silently.
class CorpusReader {
 public:
  /// Throws DataError when the file cannot be opened.
  explicit CorpusReader(const std::filesystem::path& path);

  std::optional<TextLine> next();

  std::size_t malformed_lines() const noexcept { return malformed_; }
  std::size_t blank_lines() const noexcept { return blank_; }

 private:
  std::ifstream in_;
  std::size_t line_no_ = 0;
  std::size_t malformed_ = 0;
  std::size_t blank_ = 0;
};

struct Document {
  std::string id;
  std::vector<TokenId> tokens;
};

struct LoadedCorpus {
  std::vector<Document> documents;
  std::size_t warnings = 0;
};

/// Reads and encodes a whole corpus. Lines that encode to nothing are dropped.
LoadedCorpus load_corpus(const std::filesystem::path& path, const Vocab& vocab,
                         const EncodeOptions& options = {});
/// Raw text lines, same skipping rules as CorpusReader.
std::vector<std::string> read_lines(const std::filesystem::path& path,
                                    std::size_t* warnings = nullptr);

/// Versioned binary cache of tokenised documents with varint-encoded ids.
void save_token_cache(const std::filesystem::path& path, const std::vector<Document>& documents);
std::vector<Document> load_token_cache(const std::filesystem::path& path);

}  // namespace infillgen::text
