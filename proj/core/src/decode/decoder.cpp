// SPDX-License-Identifier: Apache-2.0
#include "infillgen/decode/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "infillgen/data/example.hpp"
#include "infillgen/error.hpp"
#include "infillgen/model/multiflow.hpp"
#include "infillgen/tensor/kernels.hpp"

namespace infillgen::decode {

namespace kernels = tensor::kernels;
using tensor::Tensor;

void DecodeConfig::validate() const {
  if (max_length == 0) throw UsageError("decode: max_length must be positive");
  if (beam_size == 0) throw UsageError("decode: beam_size must be positive");
  if (!std::isfinite(length_penalty) || length_penalty < 0.0) {
    throw UsageError("decode: length_penalty must be a non-negative number");
  }
  if (min_length > max_length) throw UsageError("decode: min_length exceeds max_length");
}

double hypothesis_score(double log_prob, std::size_t length, double alpha) {
  if (length == 0) return log_prob;
  return log_prob / std::pow(static_cast<double>(length), alpha);
}

namespace {

void check_source(const model::ModelParams& model, std::span<const TokenId> source) {
  for (TokenId t : source) {
    if (t >= model.config.vocab_size) {
      throw UsageError("decode: source token " + std::to_string(t) + " outside vocabulary");
    }
  }
  if (source.size() >= model.config.max_positions) {
    throw UsageError("decode: source of length " + std::to_string(source.size()) +
                     " leaves no room under max_positions " +
                     std::to_string(model.config.max_positions));
  }
}

Tensor row_of(const Tensor& m, std::size_t r) {
  Tensor out({1, m.cols()});
  std::copy_n(m.raw() + r * m.cols(), m.cols(), out.raw());
  return out;
}

Tensor columns(const Tensor& m, std::size_t c0, std::size_t width) {
  Tensor out({m.rows(), width});
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy_n(m.raw() + r * m.cols() + c0, width, out.raw() + r * width);
  }
  return out;
}

void add_in_place(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

Tensor project_logits(const model::ModelParams& model, const Tensor& hidden) {
  Tensor logits = kernels::matmul(hidden, model.values[model.token_embedding], false, true);
  kernels::add_row_bias(logits, model.values[model.output_bias]);
  return logits;
}

}  // namespace

Tensor full_recompute_logits(const model::ModelParams& model, std::span<const TokenId> source,
                             std::span<const TokenId> prefix) {
  check_source(model, source);
  data::TrainingExample ex;
  ex.s_prime.assign(source.begin(), source.end());
  ex.t_clean.assign(prefix.begin(), prefix.end());
  ex.t_clean.push_back(text::special::kPad);
  ex.t_noised = ex.t_clean;
  ex.corrupted.assign(ex.t_clean.size(), 0);
  ex.loss_mask.assign(ex.t_clean.size(), 1);
  ex.spans = spans::SpanBoundaries::unigrams(ex.t_clean.size());
  data::fill_layout(ex);
  const data::Batch batch = data::make_batch({std::move(ex)});

  tensor::Graph graph;
  const std::vector<tensor::Var> params = model::bind_parameters(graph, model, false);
  model::ForwardOptions options;
  options.flows = {true, false};
  const model::ForwardResult result = model::forward_multiflow(graph, params, model, batch, options);
  return row_of(result.word_logits.value(), result.target_offsets[0] + prefix.size());
}

IncrementalDecoder::IncrementalDecoder(const model::ModelParams& model,
                                       std::span<const TokenId> source)
    : model_(&model),
      source_len_(source.size()),
      keys_(model.layers.size()),
      values_(model.layers.size()) {
  check_source(model, source);
  if (!source.empty()) run(embed(source, 0, 0), true);
}

std::size_t IncrementalDecoder::remaining_positions() const noexcept {
  return model_->config.max_positions - source_len_ - prefix_len_;
}

Tensor IncrementalDecoder::embed(std::span<const TokenId> tokens, std::size_t first_position,
                                 std::uint32_t segment) const {
  const model::ModelParams& m = *model_;
  std::vector<std::uint32_t> positions(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    positions[i] = static_cast<std::uint32_t>(first_position + i);
  }
  const std::vector<std::uint32_t> segments(tokens.size(), segment);
  Tensor h = kernels::gather_rows(m.values[m.token_embedding], tokens);
  add_in_place(h, kernels::gather_rows(m.values[m.position_embedding], positions));
  add_in_place(h, kernels::gather_rows(m.values[m.segment_embedding], segments));
  return h;
}

Tensor IncrementalDecoder::next_logits() const {
  if (remaining_positions() == 0) throw UsageError("decode: no position left for another token");
  const TokenId query = text::special::kAttn;
  Tensor rows = embed({&query, 1}, source_len_ + prefix_len_, 1);
  IncrementalDecoder scratch = *this;
  return project_logits(*model_, scratch.run(std::move(rows), false));
}

void IncrementalDecoder::append(TokenId token) {
  if (token >= model_->config.vocab_size) throw UsageError("decode: token outside vocabulary");
  if (remaining_positions() == 0) throw UsageError("decode: no position left for another token");
  run(embed({&token, 1}, source_len_ + prefix_len_, 1), true);
  ++prefix_len_;
}

Tensor IncrementalDecoder::run(Tensor h, bool commit) {
  const model::ModelParams& m = *model_;
  const model::ModelConfig& c = m.config;
  const std::size_t hidden = c.hidden;
  const std::size_t head_dim = c.head_dim();
  const std::size_t n_new = h.rows();
  const std::size_t n_keys = cached_rows_ + n_new;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor no_mask({1, n_keys}, 0.0);

  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const model::LayerSlots& s = m.layers[l];
    const Tensor normed = kernels::layer_norm_affine(h, m.values[s.attn_norm_gain],
                                                     m.values[s.attn_norm_bias], c.layer_norm_eps);
    Tensor qkv = kernels::matmul(normed, m.values[s.qkv_weight]);
    kernels::add_row_bias(qkv, m.values[s.qkv_bias]);

    std::vector<double> keys = keys_[l];
    std::vector<double> values = values_[l];
    for (std::size_t r = 0; r < n_new; ++r) {
      const double* row = qkv.raw() + r * 3 * hidden;
      keys.insert(keys.end(), row + hidden, row + 2 * hidden);
      values.insert(values.end(), row + 2 * hidden, row + 3 * hidden);
    }
    const Tensor k_all({n_keys, hidden}, keys);
    const Tensor v_all({n_keys, hidden}, values);

    Tensor attended({n_new, hidden});
    for (std::size_t a = 0; a < c.heads; ++a) {
      const std::size_t c0 = a * head_dim;
      const Tensor q = columns(qkv, c0, head_dim);
      Tensor scores = kernels::matmul(q, columns(k_all, c0, head_dim), false, true);
      for (double& v : scores.data()) v *= inv_sqrt_dk;
      const Tensor probs = kernels::softmax_masked(scores, no_mask).probs;
      const Tensor out = kernels::matmul(probs, columns(v_all, c0, head_dim));
      for (std::size_t r = 0; r < n_new; ++r) {
        std::copy_n(out.raw() + r * head_dim, head_dim, attended.raw() + r * hidden + c0);
      }
    }
    Tensor projected = kernels::matmul(attended, m.values[s.attn_out_weight]);
    kernels::add_row_bias(projected, m.values[s.attn_out_bias]);
    add_in_place(h, projected);

    const Tensor ffn_in = kernels::layer_norm_affine(h, m.values[s.ffn_norm_gain],
                                                     m.values[s.ffn_norm_bias], c.layer_norm_eps);
    Tensor inner = kernels::matmul(ffn_in, m.values[s.ffn_in_weight]);
    kernels::add_row_bias(inner, m.values[s.ffn_in_bias]);
    Tensor ffn = kernels::matmul(kernels::gelu(inner), m.values[s.ffn_out_weight]);
    kernels::add_row_bias(ffn, m.values[s.ffn_out_bias]);
    add_in_place(h, ffn);

    if (commit) {
      keys_[l] = std::move(keys);
      values_[l] = std::move(values);
    }
  }
  if (commit) cached_rows_ = n_keys;
  return kernels::layer_norm_affine(h, m.values[m.final_norm_gain], m.values[m.final_norm_bias],
                                    c.layer_norm_eps);
}

namespace {

std::size_t step_limit(const model::ModelParams& model, std::span<const TokenId> source,
                       const DecodeConfig& config) {
  return std::min(config.max_length, model.config.max_positions - source.size());
}

struct Live {
  Hypothesis hyp;
  IncrementalDecoder state;
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double log_prob;
  double score;
  const std::vector<TokenId>* prefix;
};

bool lex_less(const Candidate& a, const Candidate& b) {
  const auto& pa = *a.prefix;
  const auto& pb = *b.prefix;
  const std::size_t n = std::min(pa.size(), pb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (pa[i] != pb[i]) return pa[i] < pb[i];
  }
  if (pa.size() != pb.size()) return pa.size() < pb.size();
  return a.token < b.token;
}

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return lex_less(a, b);
}

bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis greedy_decode(const model::ModelParams& model, std::span<const TokenId> source,
                         const DecodeConfig& config, std::vector<Tensor>* step_logits) {
  config.validate();
  IncrementalDecoder state(model, source);
  Hypothesis hyp;
  const std::size_t limit = step_limit(model, source, config);
  for (std::size_t step = 0; step < limit; ++step) {
    const Tensor logits = state.next_logits();
    if (step_logits) step_logits->push_back(logits);
    const Tensor logp = kernels::log_softmax(logits);
    TokenId best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < logp.cols(); ++v) {
      if (v == config.end_token && step < config.min_length) continue;
      if (logp[v] > best_value) {
        best_value = logp[v];
        best = static_cast<TokenId>(v);
      }
    }
    hyp.log_prob += best_value;
    if (best == config.end_token) {
      hyp.finished = true;
      break;
    }
    hyp.tokens.push_back(best);
    if (step + 1 < limit) state.append(best);
  }
  hyp.score = hypothesis_score(hyp.log_prob, hyp.tokens.size() + (hyp.finished ? 1 : 0),
                               config.length_penalty);
  return hyp;
}

std::vector<Hypothesis> beam_decode(const model::ModelParams& model,
                                    std::span<const TokenId> source, const DecodeConfig& config) {
  config.validate();
  const std::size_t beam = config.beam_size;
  const std::size_t limit = step_limit(model, source, config);
  std::vector<Live> live;
  live.push_back({Hypothesis{}, IncrementalDecoder(model, source)});
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < limit && !live.empty() && finished.size() < beam; ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < live.size(); ++p) {
      const Tensor logp = kernels::log_softmax(live[p].state.next_logits());
      std::vector<Candidate> local;
      local.reserve(logp.cols());
      for (std::size_t v = 0; v < logp.cols(); ++v) {
        if (v == config.end_token && step < config.min_length) continue;
        const double lp = live[p].hyp.log_prob + logp[v];
        local.push_back({p, static_cast<TokenId>(v), lp,
                         hypothesis_score(lp, step + 1, config.length_penalty),
                         &live[p].hyp.tokens});
      }
      const std::size_t keep = std::min(beam, local.size());
      std::partial_sort(local.begin(), local.begin() + keep, local.end(), better);
      candidates.insert(candidates.end(), local.begin(), local.begin() + keep);
    }
    const std::size_t keep = std::min(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), better);
    candidates.resize(keep);

    std::vector<Live> next;
    for (const Candidate& cand : candidates) {
      Hypothesis hyp;
      hyp.tokens = live[cand.parent].hyp.tokens;
      hyp.log_prob = cand.log_prob;
      hyp.score = cand.score;
      if (cand.token == config.end_token) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
        continue;
      }
      hyp.tokens.push_back(cand.token);
      IncrementalDecoder state = live[cand.parent].state;
      if (step + 1 < limit) state.append(cand.token);
      next.push_back({std::move(hyp), std::move(state)});
    }
    live = std::move(next);
  }
  for (Live& l : live) finished.push_back(std::move(l.hyp));
  std::sort(finished.begin(), finished.end(), better_hypothesis);
  if (finished.size() > beam) finished.resize(beam);
  return finished;
}

Hypothesis decode(const model::ModelParams& model, std::span<const TokenId> source,
                  const DecodeConfig& config) {
  if (config.beam_size <= 1) return greedy_decode(model, source, config);
  return beam_decode(model, source, config).front();
}

}  // namespace infillgen::decode
