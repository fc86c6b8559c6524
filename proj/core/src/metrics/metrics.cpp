// SPDX-License-Identifier: Apache-2.0
#include "infillgen/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "infillgen/error.hpp"
#include "infillgen/text/vocab.hpp"

namespace infillgen::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

std::size_t total(const NgramCounts& counts) {
  std::size_t sum = 0;
  for (const auto& [gram, c] : counts) sum += c;
  return sum;
}

std::size_t clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t overlap = 0;
  for (const auto& [gram, c] : hyp) {
    const auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

double f1(double overlap, double hyp_total, double ref_total) {
  if (overlap == 0.0 || hyp_total == 0.0 || ref_total == 0.0) return 0.0;
  const double p = overlap / hyp_total;
  const double r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

void require_n(std::size_t n) {
  if (n == 0) throw UsageError("metrics: n must be at least 1");
}

std::size_t parse_suffix(std::string_view name, std::string_view prefix) {
  std::size_t value = 0;
  const std::string_view digits = name.substr(prefix.size());
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || value == 0) {
    throw UsageError("metrics: unknown metric '" + std::string(name) + "'");
  }
  return value;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  const std::string lowered = text::lowercase_ascii(text);
  Tokens out;
  for (std::string_view piece : text::split_whitespace(lowered)) out.emplace_back(piece);
  return out;
}

EvalPair make_pair(std::string_view hypothesis, std::string_view reference) {
  return EvalPair{tokenize(hypothesis), {tokenize(reference)}};
}

double rouge_n(const EvalPair& pair, std::size_t n) {
  require_n(n);
  const NgramCounts hyp = count_ngrams(pair.hypothesis, n);
  const double hyp_total = static_cast<double>(total(hyp));
  double best = 0.0;
  for (const Tokens& reference : pair.references) {
    const NgramCounts ref = count_ngrams(reference, n);
    best = std::max(best, f1(static_cast<double>(clipped_overlap(hyp, ref)), hyp_total,
                             static_cast<double>(total(ref))));
  }
  return best;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const EvalPair& pair) {
  double best = 0.0;
  for (const Tokens& reference : pair.references) {
    best = std::max(best, f1(static_cast<double>(lcs_length(pair.hypothesis, reference)),
                             static_cast<double>(pair.hypothesis.size()),
                             static_cast<double>(reference.size())));
  }
  return best;
}

double bleu(std::span<const EvalPair> pairs, std::size_t max_n) {
  require_n(max_n);
  std::vector<double> matches(max_n + 1, 0.0), totals(max_n + 1, 0.0);
  double hyp_length = 0.0, ref_length = 0.0;
  for (const EvalPair& pair : pairs) {
    if (pair.references.empty()) throw UsageError("bleu: pair without reference");
    const std::size_t c = pair.hypothesis.size();
    std::size_t r = pair.references.front().size();
    for (const Tokens& ref : pair.references) {
      const auto d = [c](std::size_t len) { return len > c ? len - c : c - len; };
      if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
    }
    hyp_length += static_cast<double>(c);
    ref_length += static_cast<double>(r);
    for (std::size_t n = 1; n <= max_n; ++n) {
      const NgramCounts hyp = count_ngrams(pair.hypothesis, n);
      NgramCounts max_ref;
      for (const Tokens& ref : pair.references) {
        for (const auto& [gram, count] : count_ngrams(ref, n)) {
          std::size_t& slot = max_ref[gram];
          slot = std::max(slot, count);
        }
      }
      matches[n] += static_cast<double>(clipped_overlap(hyp, max_ref));
      totals[n] += static_cast<double>(total(hyp));
    }
  }
  if (hyp_length == 0.0 || matches[1] == 0.0) return 0.0;
  double log_sum = std::log(matches[1] / totals[1]);
  for (std::size_t n = 2; n <= max_n; ++n) {
    log_sum += std::log((matches[n] + 1.0) / (totals[n] + 1.0));
  }
  const double brevity = hyp_length > ref_length ? 1.0 : std::exp(1.0 - ref_length / hyp_length);
  return brevity * std::exp(log_sum / static_cast<double>(max_n));
}

double distinct_n(std::span<const Tokens> hypotheses, std::size_t n) {
  require_n(n);
  std::set<std::vector<std::string>> unique;
  std::size_t count = 0;
  for (const Tokens& hyp : hypotheses) {
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      unique.emplace(hyp.begin() + i, hyp.begin() + i + n);
      ++count;
    }
  }
  return count == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(count);
}

const MetricScore* ScoreReport::find(std::string_view name) const {
  for (const MetricScore& m : metrics)
    if (m.name == name) return &m;
  return nullptr;
}

void ScoreReport::write_text(std::ostream& out) const {
  out << "# metrics over lowercased whitespace tokens; bleu smoothing: " << kBleuSmoothing << '\n';
  out << "metric\tvalue\tcount\n";
  char buf[64];
  for (const MetricScore& m : metrics) {
    std::snprintf(buf, sizeof buf, "%.6f", m.corpus);
    out << m.name << '\t' << buf << '\t' << pair_count << '\n';
  }
}

void ScoreReport::write_pairs_tsv(std::ostream& out) const {
  out << "pair";
  for (const MetricScore& m : metrics)
    if (!m.per_pair.empty()) out << '\t' << m.name;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < pair_count; ++i) {
    out << i + 1;
    for (const MetricScore& m : metrics) {
      if (m.per_pair.empty()) continue;
      std::snprintf(buf, sizeof buf, "%.6f", m.per_pair[i]);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

std::vector<std::string> default_metric_names() {
  return {"rouge-1", "rouge-2", "rouge-l", "bleu-4", "distinct-1", "distinct-2"};
}

ScoreReport evaluate(std::span<const EvalPair> pairs, std::span<const std::string> metric_names) {
  ScoreReport report;
  report.pair_count = pairs.size();
  const auto per_pair = [&](MetricScore& m, auto&& fn) {
    double sum = 0.0;
    for (const EvalPair& p : pairs) {
      m.per_pair.push_back(fn(p));
      sum += m.per_pair.back();
    }
    m.corpus = pairs.empty() ? 0.0 : sum / static_cast<double>(pairs.size());
  };
  for (const std::string& name : metric_names) {
    MetricScore m{name, 0.0, {}};
    if (name == "rouge-l") {
      per_pair(m, [](const EvalPair& p) { return rouge_l(p); });
    } else if (name.starts_with("rouge-")) {
      const std::size_t n = parse_suffix(name, "rouge-");
      per_pair(m, [n](const EvalPair& p) { return rouge_n(p, n); });
    } else if (name.starts_with("bleu-")) {
      m.corpus = bleu(pairs, parse_suffix(name, "bleu-"));
    } else if (name.starts_with("distinct-")) {
      std::vector<Tokens> hyps;
      for (const EvalPair& p : pairs) hyps.push_back(p.hypothesis);
      m.corpus = distinct_n(hyps, parse_suffix(name, "distinct-"));
    } else {
      throw UsageError("metrics: unknown metric '" + name + "'");
    }
    report.metrics.push_back(std::move(m));
  }
  return report;
}

}  // namespace infillgen::metrics
