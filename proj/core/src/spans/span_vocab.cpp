// SPDX-License-Identifier: Apache-2.0
#include "infillgen/spans/span_vocab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "infillgen/binary_io.hpp"
#include "infillgen/error.hpp"

namespace infillgen::spans {

NGram::NGram(std::span<const TokenId> tokens) {
  if (tokens.empty() || tokens.size() > kMaxOrder) {
    throw UsageError("ngram: order must be 1.." + std::to_string(kMaxOrder));
  }
  std::copy(tokens.begin(), tokens.end(), ids.begin());
  order = static_cast<std::uint8_t>(tokens.size());
}

NGram::NGram(std::initializer_list<TokenId> tokens)
    : NGram(std::span<const TokenId>(tokens.begin(), tokens.size())) {}

std::size_t NGramHash::operator()(const NGram& g) const noexcept {
  std::uint64_t h = g.order;
  for (std::size_t i = 0; i < g.order; ++i) h = h * 0x9e3779b97f4a7c15ULL + g.ids[i] + 1;
  h ^= h >> 31;
  return static_cast<std::size_t>(h * 0xbf58476d1ce4e5b9ULL);
}

std::uint64_t NgramCounts::count(const NGram& g) const {
  if (g.order == 0 || g.order > kMaxOrder) return 0;
  const auto& table = counts[g.order];
  const auto it = table.find(g);
  return it == table.end() ? 0 : it->second;
}

NgramCounts count_ngrams(std::span<const std::vector<TokenId>> documents, std::size_t max_order) {
  if (max_order == 0 || max_order > kMaxOrder) {
    throw UsageError("count_ngrams: max_order must be 1.." + std::to_string(kMaxOrder));
  }
  NgramCounts result;
  for (const auto& doc : documents) {
    io::Fnv1a doc_hash;
    doc_hash.update_u64(doc.size());
    if (!doc.empty()) doc_hash.update(doc.data(), doc.size() * sizeof(TokenId));
    result.corpus_hash += doc_hash.digest();  // sum keeps the hash order-free

    for (std::size_t n = 1; n <= max_order; ++n) {
      if (doc.size() < n) break;
      for (std::size_t i = 0; i + n <= doc.size(); ++i) {
        ++result.counts[n][NGram(std::span<const TokenId>(doc.data() + i, n))];
        ++result.totals[n];
      }
    }
  }
  return result;
}

double t_statistic(const NGram& w, const NgramCounts& counts) {
  const std::uint64_t c = counts.count(w);
  if (c == 0) throw UsageError("t_statistic: n-gram was never counted");
  const double total = static_cast<double>(counts.totals[w.order]);
  const double p = static_cast<double>(c) / total;
  double p_independent = 1.0;
  for (TokenId id : w.tokens()) {
    const std::uint64_t uc = counts.count(NGram{id});
    if (uc == 0) throw UsageError("t_statistic: unigram was never counted");
    p_independent *= static_cast<double>(uc) / static_cast<double>(counts.totals[1]);
  }
  const double variance = p * (1.0 - p);
  if (variance == 0.0) return std::numeric_limits<double>::infinity();
  return (p - p_independent) / std::sqrt(variance / total);
}

std::size_t SpanVocab::count_of_order(std::size_t order) const {
  return static_cast<std::size_t>(
      std::count_if(members_.begin(), members_.end(), [order](const NGram& g) { return g.order == order; }));
}

double SpanVocab::score(const NGram& g) const {
  const auto it = scores_.find(g);
  if (it == scores_.end()) throw UsageError("span vocab: not a member");
  return it->second;
}

std::vector<NGram> SpanVocab::sorted_members() const {
  std::vector<NGram> out(members_.begin(), members_.end());
  std::sort(out.begin(), out.end(), [](const NGram& a, const NGram& b) {
    return a.order != b.order ? a.order < b.order : a.ids < b.ids;
  });
  return out;
}

void SpanVocab::insert(const NGram& g, double score) {
  members_.insert(g);
  scores_[g] = score;
}

void SpanVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("span vocab: cannot write " + path.string());
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(corpus_hash_));
  out << "# infillgen span-vocab v1\n";
  out << "bigram_top=" << limits_.bigram_top << " trigram_top=" << limits_.trigram_top
      << " corpus_hash=" << hash << '\n';
  for (const NGram& g : sorted_members()) {
    out << static_cast<int>(g.order);
    for (TokenId id : g.tokens()) out << ' ' << id;
    const double s = scores_.at(g);
    char buf[40];
    if (std::isinf(s)) {
      std::snprintf(buf, sizeof buf, "%s", s > 0 ? "inf" : "-inf");
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", s);
    }
    out << ' ' << buf << '\n';
  }
}

SpanVocab SpanVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("span vocab: cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "# infillgen span-vocab v1") {
    throw DataError("span vocab: bad header in " + path.string());
  }
  SpanVocab vocab;
  if (!std::getline(in, line)) throw DataError("span vocab: missing limits line");
  {
    unsigned long long bi = 0, tri = 0, hash = 0;
    if (std::sscanf(line.c_str(), "bigram_top=%llu trigram_top=%llu corpus_hash=%llx", &bi, &tri,
                    &hash) != 3) {
      throw DataError("span vocab: malformed limits line '" + line + "'");
    }
    vocab.limits_ = {static_cast<std::size_t>(bi), static_cast<std::size_t>(tri)};
    vocab.corpus_hash_ = hash;
  }
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    int order = 0;
    fields >> order;
    if (order < 1 || order > static_cast<int>(kMaxOrder)) {
      throw DataError("span vocab: bad order on line " + std::to_string(line_no));
    }
    std::vector<TokenId> ids(static_cast<std::size_t>(order));
    for (TokenId& id : ids) fields >> id;
    std::string score_text;
    fields >> score_text;
    if (!fields) throw DataError("span vocab: truncated line " + std::to_string(line_no));
    vocab.insert(NGram(std::span<const TokenId>(ids)), std::strtod(score_text.c_str(), nullptr));
  }
  return vocab;
}

SpanVocab build_span_vocab(const NgramCounts& counts, SpanVocabLimits limits) {
  SpanVocab vocab;
  vocab.limits_ = limits;
  vocab.corpus_hash_ = counts.corpus_hash;
  for (const auto& [g, c] : counts.counts[1]) vocab.insert(g, 0.0);

  const auto select = [&](std::size_t order, std::size_t top) {
    std::vector<std::pair<double, NGram>> ranked;
    ranked.reserve(counts.counts[order].size());
    for (const auto& [g, c] : counts.counts[order]) ranked.emplace_back(t_statistic(g, counts), g);
    const auto better = [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second.ids < b.second.ids;
    };
    const std::size_t keep = std::min(top, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                      better);
    for (std::size_t i = 0; i < keep; ++i) vocab.insert(ranked[i].second, ranked[i].first);
  };
  select(2, limits.bigram_top);
  select(3, limits.trigram_top);
  return vocab;
}

std::size_t SpanBoundaries::span_of(std::size_t pos) const {
  if (pos >= length) throw UsageError("span_of: position past the sequence end");
  const auto it = std::upper_bound(starts.begin(), starts.end(), pos);
  return static_cast<std::size_t>(it - starts.begin()) - 1;
}

void SpanBoundaries::validate(std::size_t max_span) const {
  if (length == 0) {
    if (!starts.empty()) throw UsageError("span boundaries: starts given for an empty sequence");
    return;
  }
  if (starts.empty() || starts.front() != 0) {
    throw UsageError("span boundaries: first span must start at 0");
  }
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end = span_end(i);
    if (end <= starts[i] || end > length) {
      throw UsageError("span boundaries: span " + std::to_string(i) + " is empty or out of range");
    }
    if (max_span != 0 && end - starts[i] > max_span) {
      throw UsageError("span boundaries: span " + std::to_string(i) + " longer than " +
                       std::to_string(max_span));
    }
  }
}

SpanBoundaries SpanBoundaries::unigrams(std::size_t length) {
  SpanBoundaries b;
  b.length = length;
  for (std::size_t i = 0; i < length; ++i) b.starts.push_back(i);
  return b;
}

SpanBoundaries segment_spans(std::span<const TokenId> tokens, const SpanVocab& vocab) {
  if (tokens.empty()) throw UsageError("segment_spans: empty sequence");
  SpanBoundaries b;
  b.length = tokens.size();
  std::size_t cursor = 0;
  while (cursor < tokens.size()) {
    b.starts.push_back(cursor);
    std::size_t take = 1;
    for (std::size_t n = kMaxOrder; n >= 2; --n) {
      if (cursor + n <= tokens.size() && vocab.contains(NGram(tokens.subspan(cursor, n)))) {
        take = n;
        break;
      }
    }
    cursor += take;
  }
  return b;
}

}  // namespace infillgen::spans
