// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference check of reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "infillgen/tensor/graph.hpp"

namespace infillgen::testing {

/// Builds a scalar loss from leaves bound to `inputs`.
using LossBuilder = std::function<tensor::Var(tensor::Graph&, std::span<const tensor::Var>)>;

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double evaluate_loss(const LossBuilder& build, const std::vector<tensor::Tensor>& inputs) {
  tensor::Graph g;
  std::vector<tensor::Var> leaves;
  for (const tensor::Tensor& t : inputs) leaves.push_back(g.leaf(t, false));
  return build(g, leaves).value().item();
}

/// Compares every input element (or every `stride`-th one) with step h.
inline GradCheck check_gradients(const LossBuilder& build, std::vector<tensor::Tensor> inputs,
                                 double h = 1e-5, std::size_t stride = 1) {
  tensor::Graph g;
  std::vector<tensor::Var> leaves;
  for (const tensor::Tensor& t : inputs) leaves.push_back(g.leaf(t, true));
  g.backward(build(g, leaves));

  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const tensor::Tensor analytic = g.grad(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].numel(); i += stride) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double plus = evaluate_loss(build, inputs);
      inputs[k][i] = saved - h;
      const double minus = evaluate_loss(build, inputs);
      inputs[k][i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[i], numeric));
      out.max_abs_error = std::max(out.max_abs_error, std::abs(analytic[i] - numeric));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace infillgen::testing
