// SPDX-License-Identifier: Apache-2.0
#include "infillgen/harness/attention_analysis.hpp"

#include <cstdio>
#include <ostream>

#include "infillgen/error.hpp"
#include "infillgen/model/multiflow.hpp"
#include "infillgen/random.hpp"

namespace infillgen::harness {

AttentionMass measure_attention(const model::ModelParams& model,
                                std::span<const data::TrainingExample> examples,
                                std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("attention analysis: batch_size must be positive");
  AttentionMass out;
  double source_keys = 0.0;
  double source_weight = 0.0, unnoised_weight = 0.0, noised_weight = 0.0;
  for (std::size_t first = 0; first < examples.size(); first += batch_size) {
    const std::size_t last = std::min(examples.size(), first + batch_size);
    const data::Batch batch = data::make_batch({examples.begin() + first, examples.begin() + last});
    tensor::Graph graph;
    const std::vector<tensor::Var> params = model::bind_parameters(graph, model, false);
    model::AttentionCapture capture;
    model::ForwardOptions options;
    options.flows = {true, false};
    options.attention_capture = &capture;
    const model::ForwardResult result = model::forward_multiflow(graph, params, model, batch, options);

    for (std::size_t b = 0; b < batch.size(); ++b) {
      const data::TrainingExample& ex = batch.examples[b];
      const model::ExampleRows& rows = result.rows[b];
      const std::size_t heads = capture[b].size();
      for (std::size_t i = 0; i < rows.target_len; ++i) {
        const std::size_t q = rows.context_rows() + i;
        double src = 0.0, clean = 0.0, noisy = 0.0, self = 0.0;
        for (std::size_t h = 0; h < heads; ++h) {
          const tensor::Tensor& p = capture[b][h];
          for (std::size_t k = 0; k < rows.source_len; ++k) src += p.at(q, k);
          for (std::size_t j = 0; j < i; ++j) {
            (ex.corrupted[j] ? noisy : clean) += p.at(q, rows.source_len + j);
          }
          self += p.at(q, q);
        }
        const double inv = 1.0 / static_cast<double>(heads);
        out.source += src * inv;
        out.unnoised += clean * inv;
        out.noised += noisy * inv;
        out.self += self * inv;
        source_weight += src * inv;
        unnoised_weight += clean * inv;
        noised_weight += noisy * inv;
        source_keys += static_cast<double>(rows.source_len);
        for (std::size_t j = 0; j < i; ++j) ++(ex.corrupted[j] ? out.noised_keys : out.unnoised_keys);
        ++out.queries;
      }
    }
  }
  if (out.queries > 0) {
    const double n = static_cast<double>(out.queries);
    out.source /= n;
    out.unnoised /= n;
    out.noised /= n;
    out.self /= n;
  }
  out.source_per_key = source_keys > 0.0 ? source_weight / source_keys : 0.0;
  out.unnoised_per_key =
      out.unnoised_keys > 0 ? unnoised_weight / static_cast<double>(out.unnoised_keys) : 0.0;
  out.noised_per_key =
      out.noised_keys > 0 ? noised_weight / static_cast<double>(out.noised_keys) : 0.0;
  return out;
}

std::vector<AttentionRow> analyze_attention(const model::ModelParams& model,
                                            std::span<const PairedSequence> pairs,
                                            std::span<const double> rates,
                                            data::NoiseConfig noise, std::uint64_t seed) {
  std::vector<AttentionRow> rows;
  for (std::size_t r = 0; r < rates.size(); ++r) {
    noise.rate = rates[r];
    std::vector<data::TrainingExample> examples;
    examples.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      examples.push_back(data::assemble_pair(pairs[i].source, pairs[i].target, nullptr,
                                             data::CorruptionMode::kNoising, noise,
                                             derive_seed(derive_seed(seed, r), i)));
    }
    rows.push_back({rates[r], measure_attention(model, examples)});
  }
  return rows;
}

void write_attention_table(std::ostream& out, std::span<const AttentionRow> rows) {
  char buf[128];
  for (const AttentionRow& row : rows) {
    const AttentionMass& m = row.mass;
    std::snprintf(buf, sizeof buf, "# rate %.3f, %zu queries\n", row.rate, m.queries);
    out << buf << "keys\tmass\tper_key\n";
    std::snprintf(buf, sizeof buf, "source\t%.6f\t%.6f\n", m.source, m.source_per_key);
    out << buf;
    std::snprintf(buf, sizeof buf, "unnoised_target\t%.6f\t%.6f\n", m.unnoised, m.unnoised_per_key);
    out << buf;
    if (m.has_noised()) {
      std::snprintf(buf, sizeof buf, "noised_target\t%.6f\t%.6f\n", m.noised, m.noised_per_key);
      out << buf;
    } else {
      out << "noised_target\t-\t-\n";
    }
    std::snprintf(buf, sizeof buf, "self\t%.6f\t-\n", m.self);
    out << buf;
  }
}

}  // namespace infillgen::harness
