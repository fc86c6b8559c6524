// SPDX-License-Identifier: Apache-2.0
#include "infillgen/tensor/ops.hpp"

#include <cmath>
#include <random>
#include <string>

#include "infillgen/error.hpp"

namespace infillgen::tensor {
namespace {

enum class Broadcast { kNone, kRow };

Broadcast check_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  const bool row_like = (b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1));
  if (row_like && a.rank() == 2 && b.numel() == a.cols()) return Broadcast::kRow;
  throw ShapeError(std::string(op) + ": cannot combine " + shape_to_string(a.shape()) +
                   " with " + shape_to_string(b.shape()));
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  double* d = dst->raw();
  const double* s = src.raw();
  for (std::size_t i = 0; i < src.numel(); ++i) d[i] += s[i];
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank 2, got " + shape_to_string(t.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = check_binary("add", av, bv);
  Tensor out = av;
  if (mode == Broadcast::kNone) {
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  } else {
    kernels::add_row_bias(out, bv);
  }
  return a.graph->record("add", std::move(out), {a, b}, [mode](Graph::BackwardContext& ctx) {
    const Tensor& g = ctx.out_grad();
    accumulate(ctx.grad(0), g);
    if (Tensor* gb = ctx.grad(1)) {
      if (mode == Broadcast::kNone) {
        accumulate(gb, g);
      } else {
        const std::size_t c = g.cols();
        for (std::size_t r0 = 0; r0 < g.numel(); r0 += c)
          for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[r0 + j];
      }
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = check_binary("mul", av, bv);
  const std::size_t c = av.cols();
  Tensor out(av.shape());
  const std::size_t b_stride = mode == Broadcast::kNone ? c : 0;
  for (std::size_t r0 = 0, b0 = 0; r0 < out.numel(); r0 += c, b0 += b_stride)
    for (std::size_t j = 0; j < c; ++j) out[r0 + j] = av[r0 + j] * bv[b0 + j];
  return a.graph->record("mul", std::move(out), {a, b}, [b_stride, c](Graph::BackwardContext& ctx) {
    const Tensor& g = ctx.out_grad();
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    if (Tensor* ga = ctx.grad(0)) {
      for (std::size_t r0 = 0, b0 = 0; r0 < g.numel(); r0 += c, b0 += b_stride)
        for (std::size_t j = 0; j < c; ++j) (*ga)[r0 + j] += g[r0 + j] * bv[b0 + j];
    }
    if (Tensor* gb = ctx.grad(1)) {
      for (std::size_t r0 = 0, b0 = 0; r0 < g.numel(); r0 += c, b0 += b_stride)
        for (std::size_t j = 0; j < c; ++j) (*gb)[b0 + j] += g[r0 + j] * av[r0 + j];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return a.graph->record("scale", std::move(out), {a}, [factor](Graph::BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad(0)) {
      const Tensor& g = ctx.out_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += factor * g[i];
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.graph->record("sum", Tensor::scalar(total), {a}, [](Graph::BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad(0)) {
      const double g = ctx.out_grad().item();
      for (double& v : ga->data()) v += g;
    }
  });
}

Var matmul(Var a, Var b, bool transpose_a, bool transpose_b) {
  Tensor out = kernels::matmul(a.value(), b.value(), transpose_a, transpose_b);
  return a.graph->record(
      "matmul", std::move(out), {a, b}, [transpose_a, transpose_b](Graph::BackwardContext& ctx) {
        const Tensor& g = ctx.out_grad();
        const Tensor& av = ctx.input(0);
        const Tensor& bv = ctx.input(1);
        if (Tensor* ga = ctx.grad(0)) {
          // d op(A) = dC op(B)^T
          accumulate(ga, transpose_a ? kernels::matmul(bv, g, transpose_b, true)
                                     : kernels::matmul(g, bv, false, !transpose_b));
        }
        if (Tensor* gb = ctx.grad(1)) {
          // d op(B) = op(A)^T dC
          accumulate(gb, transpose_b ? kernels::matmul(g, av, true, transpose_a)
                                     : kernels::matmul(av, g, !transpose_a, false));
        }
      });
}

Var transpose(Var a) {
  return a.graph->record("transpose", kernels::transpose(a.value()), {a},
                         [](Graph::BackwardContext& ctx) {
                           accumulate(ctx.grad(0), kernels::transpose(ctx.out_grad()));
                         });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  Graph* graph = parts.front().graph;
  std::vector<std::size_t> extents;
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_rank2("concat", v);
    if (axis == 0) {
      if (rows == 0 && cols == 0) cols = v.shape()[1];
      if (v.shape()[1] != cols) {
        throw ShapeError("concat: column mismatch " + std::to_string(v.shape()[1]) + " vs " +
                         std::to_string(cols));
      }
      rows += v.shape()[0];
      extents.push_back(v.shape()[0]);
    } else {
      if (rows == 0 && cols == 0) rows = v.shape()[0];
      if (v.shape()[0] != rows) {
        throw ShapeError("concat: row mismatch " + std::to_string(v.shape()[0]) + " vs " +
                         std::to_string(rows));
      }
      cols += v.shape()[1];
      extents.push_back(v.shape()[1]);
    }
  }
  Tensor out(Shape{rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t r = v.shape()[0], c = v.shape()[1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (axis == 0) {
          out.at(offset + i, j) = v.at(i, j);
        } else {
          out.at(i, offset + j) = v.at(i, j);
        }
      }
    offset += axis == 0 ? r : c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return graph->record("concat", std::move(out), std::move(inputs),
                       [axis, extents](Graph::BackwardContext& ctx) {
                         const Tensor& g = ctx.out_grad();
                         std::size_t offset = 0;
                         for (std::size_t k = 0; k < extents.size(); ++k) {
                           if (Tensor* gk = ctx.grad(k)) {
                             const std::size_t r = gk->shape()[0], c = gk->shape()[1];
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) {
                                 gk->at(i, j) +=
                                     axis == 0 ? g.at(offset + i, j) : g.at(i, offset + j);
                               }
                           }
                           offset += extents[k];
                         }
                       });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  require_rank2("slice", v);
  if (axis > 1 || begin > end || end > v.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_to_string(v.shape()));
  }
  const std::size_t r = axis == 0 ? end - begin : v.shape()[0];
  const std::size_t c = axis == 1 ? end - begin : v.shape()[1];
  Tensor out(Shape{r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.at(i, j) = axis == 0 ? v.at(begin + i, j) : v.at(i, begin + j);
  return a.graph->record("slice", std::move(out), {a}, [axis, begin](Graph::BackwardContext& ctx) {
    Tensor* ga = ctx.grad(0);
    if (ga == nullptr) return;
    const Tensor& g = ctx.out_grad();
    for (std::size_t i = 0; i < g.shape()[0]; ++i)
      for (std::size_t j = 0; j < g.shape()[1]; ++j) {
        if (axis == 0) {
          ga->at(begin + i, j) += g.at(i, j);
        } else {
          ga->at(i, begin + j) += g.at(i, j);
        }
      }
  });
}

Var layer_norm(Var x, double eps) {
  return x.graph->record(
      "layer_norm", kernels::layer_norm(x.value(), eps), {x}, [eps](Graph::BackwardContext& ctx) {
        Tensor* gx = ctx.grad(0);
        if (gx == nullptr) return;
        const Tensor& xin = ctx.input(0);
        const Tensor& y = ctx.out_value();
        const Tensor& g = ctx.out_grad();
        const std::size_t c = xin.cols();
        const std::size_t r = xin.numel() / c;
        for (std::size_t i = 0; i < r; ++i) {
          const double* xr = xin.raw() + i * c;
          double mean = 0.0;
          for (std::size_t j = 0; j < c; ++j) mean += xr[j];
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + eps);
          const double* yr = y.raw() + i * c;
          const double* gr = g.raw() + i * c;
          double mean_g = 0.0, mean_gy = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            mean_g += gr[j];
            mean_gy += gr[j] * yr[j];
          }
          mean_g /= static_cast<double>(c);
          mean_gy /= static_cast<double>(c);
          double* out = gx->raw() + i * c;
          for (std::size_t j = 0; j < c; ++j) out[j] += inv * (gr[j] - mean_g - yr[j] * mean_gy);
        }
      });
}

Var gelu(Var x) {
  return x.graph->record("gelu", kernels::gelu(x.value()), {x}, [](Graph::BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      const Tensor& xin = ctx.input(0);
      const Tensor& g = ctx.out_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * kernels::gelu_derivative(xin[i]);
    }
  });
}

Var embedding_lookup(Var table, std::vector<std::uint32_t> ids) {
  Tensor out = kernels::gather_rows(table.value(), ids);
  return table.graph->record(
      "embedding_lookup", std::move(out), {table},
      [ids = std::move(ids)](Graph::BackwardContext& ctx) {
        Tensor* gt = ctx.grad(0);
        if (gt == nullptr) return;
        const Tensor& g = ctx.out_grad();
        const std::size_t c = g.cols();
        for (std::size_t i = 0; i < ids.size(); ++i)
          for (std::size_t j = 0; j < c; ++j) gt->at(ids[i], j) += g.at(i, j);
      });
}

Var dropout(Var x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(x.value().shape());
  const double kept_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = keep(rng) ? kept_scale : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return x.graph->record("dropout", std::move(out), {x},
                         [mask = std::move(mask)](Graph::BackwardContext& ctx) {
                           if (Tensor* gx = ctx.grad(0)) {
                             const Tensor& g = ctx.out_grad();
                             for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * mask[i];
                           }
                         });
}

Var softmax_masked(Var logits, const Tensor& mask, SoftmaxOptions options) {
  kernels::SoftmaxResult result = kernels::softmax_masked(logits.value(), mask, options.sentinel);
  if (!options.allow_fully_masked && !result.fully_masked_rows.empty()) {
    throw UsageError("softmax_masked: row " + std::to_string(result.fully_masked_rows.front()) +
                     " has every key masked");
  }
  return logits.graph->record(
      "softmax_masked", std::move(result.probs), {logits}, [](Graph::BackwardContext& ctx) {
        Tensor* gl = ctx.grad(0);
        if (gl == nullptr) return;
        const Tensor& p = ctx.out_value();
        const Tensor& g = ctx.out_grad();
        const std::size_t c = p.cols();
        const std::size_t r = p.numel() / c;
        for (std::size_t i = 0; i < r; ++i) {
          const double* pr = p.raw() + i * c;
          const double* gr = g.raw() + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += pr[j] * gr[j];
          double* out = gl->raw() + i * c;
          for (std::size_t j = 0; j < c; ++j) out[j] += pr[j] * (gr[j] - dot);
        }
      });
}

Var cross_entropy_label_smoothed(Var logits, std::vector<std::uint32_t> targets, double smoothing,
                                 std::vector<std::uint8_t> ignore) {
  const Tensor& lv = logits.value();
  require_rank2("cross_entropy", lv);
  const std::size_t rows = lv.shape()[0], vocab = lv.shape()[1];
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw UsageError("cross_entropy: smoothing must be in [0, 1)");
  }
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  }
  if (ignore.empty()) ignore.assign(rows, 0);
  if (ignore.size() != rows) throw ShapeError("cross_entropy: ignore mask length mismatch");
  std::size_t counted = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (ignore[i]) continue;
    if (targets[i] >= vocab) {
      throw UsageError("cross_entropy: target " + std::to_string(targets[i]) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    ++counted;
  }
  if (counted == 0) throw UsageError("cross_entropy: every position is ignored");

  const Tensor logp = kernels::log_softmax(lv);
  const double off = smoothing / static_cast<double>(vocab);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (ignore[i]) continue;
    double row_sum = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) row_sum += logp.at(i, j);
    total += -(1.0 - smoothing) * logp.at(i, targets[i]) - off * row_sum;
  }
  const double inv_count = 1.0 / static_cast<double>(counted);
  return logits.graph->record(
      "cross_entropy", Tensor::scalar(total * inv_count), {logits},
      [logp, targets = std::move(targets), ignore = std::move(ignore), smoothing, off,
       inv_count](Graph::BackwardContext& ctx) {
        Tensor* gl = ctx.grad(0);
        if (gl == nullptr) return;
        const double g = ctx.out_grad().item() * inv_count;
        const std::size_t vocab = logp.cols();
        for (std::size_t i = 0; i < ignore.size(); ++i) {
          if (ignore[i]) continue;
          for (std::size_t j = 0; j < vocab; ++j) {
            double q = off + (j == targets[i] ? 1.0 - smoothing : 0.0);
            gl->at(i, j) += g * (std::exp(logp.at(i, j)) - q);
          }
        }
      });
}

}  // namespace infillgen::tensor
