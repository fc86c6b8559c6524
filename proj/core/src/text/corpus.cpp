// SPDX-License-Identifier: Apache-2.0
#include "infillgen/text/corpus.hpp"

#include <cstring>

#include "infillgen/binary_io.hpp"
#include "infillgen/error.hpp"

namespace infillgen::text {
namespace {

constexpr char kTokenCacheMagic[8] = {'I', 'N', 'F', 'L', 'T', 'O', 'K', 'S'};
constexpr std::uint32_t kTokenCacheVersion = 1;

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\v\f") == std::string_view::npos;
}

}  // namespace

bool is_valid_utf8(std::string_view bytes) noexcept {
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= bytes.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(bytes[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    // overlong encodings, surrogates, out of range
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        (cp >= 0xd800 && cp <= 0xdfff) || cp > 0x10ffff) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw DataError("corpus: cannot read " + path.string());
}

std::optional<TextLine> CorpusReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!is_valid_utf8(line)) {
      ++malformed_;
      continue;
    }
    if (is_blank(line)) {
      ++blank_;
      continue;
    }
    return TextLine{std::to_string(line_no_), std::move(line)};
  }
  return std::nullopt;
}

LoadedCorpus load_corpus(const std::filesystem::path& path, const Vocab& vocab,
                         const EncodeOptions& options) {
  CorpusReader reader(path);
  LoadedCorpus corpus;
  while (auto line = reader.next()) {
    Document doc{std::move(line->id), vocab.encode(line->text, options)};
    if (!doc.tokens.empty()) corpus.documents.push_back(std::move(doc));
  }
  corpus.warnings = reader.malformed_lines();
  return corpus;
}

std::vector<std::string> read_lines(const std::filesystem::path& path, std::size_t* warnings) {
  CorpusReader reader(path);
  std::vector<std::string> lines;
  while (auto line = reader.next()) lines.push_back(std::move(line->text));
  if (warnings) *warnings = reader.malformed_lines();
  return lines;
}

void save_token_cache(const std::filesystem::path& path, const std::vector<Document>& documents) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("token cache: cannot write " + path.string());
  io::BinaryWriter out(file);
  out.bytes(kTokenCacheMagic, sizeof kTokenCacheMagic);
  out.u32(kTokenCacheVersion);
  out.varint(documents.size());
  for (const Document& doc : documents) {
    out.varint(doc.id.size());
    out.bytes(doc.id.data(), doc.id.size());
    out.varint(doc.tokens.size());
    for (TokenId id : doc.tokens) out.varint(id);
  }
}

std::vector<Document> load_token_cache(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("token cache: cannot read " + path.string());
  io::BinaryReader in(file);
  char magic[sizeof kTokenCacheMagic];
  in.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kTokenCacheMagic, sizeof magic) != 0) {
    throw DataError("token cache: bad magic in " + path.string());
  }
  if (in.u32() != kTokenCacheVersion) throw DataError("token cache: unsupported version");
  std::vector<Document> documents(in.varint());
  for (Document& doc : documents) {
    doc.id.resize(in.varint());
    in.bytes(doc.id.data(), doc.id.size());
    doc.tokens.resize(in.varint());
    for (TokenId& id : doc.tokens) id = static_cast<TokenId>(in.varint());
  }
  return documents;
}

}  // namespace infillgen::text
