// SPDX-License-Identifier: Apache-2.0
#include "infillgen/tensor/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#if defined(__AVX2__) || defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "infillgen/error.hpp"

namespace infillgen::tensor::kernels {
namespace {

void require_rank2(const Tensor& t, const char* kernel, const char* name) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(kernel) + ": " + name + " must be rank 2, got " +
                     shape_to_string(t.shape()));
  }
}

// Every output element is accumulated as c = a[i][0]*b[0][j] + a[i][1]*b[1][j]
// + ... in ascending k with one fused multiply-add per term (plain
// multiply-add on targets without FMA), whatever block shape computes it. A
// row's result therefore never depends on the other rows or columns in the
// call. Element (r, p) of a lives at a[r * row_stride + p * k_stride].
#if defined(__FMA__)
inline double madd(double a, double b, double c) { return std::fma(a, b, c); }
#else
inline double madd(double a, double b, double c) { return a * b + c; }
#endif

template <std::size_t R>
void scalar_block(const double* __restrict a, std::size_t row_stride, std::size_t k_stride,
                  const double* __restrict b, std::size_t ldb, double* __restrict c,
                  std::size_t ldc, std::size_t k, std::size_t width) {
  for (std::size_t j = 0; j < width; ++j) {
    double acc[R] = {};
    for (std::size_t p = 0; p < k; ++p) {
      const double bv = b[p * ldb + j];
      for (std::size_t r = 0; r < R; ++r) acc[r] = madd(a[r * row_stride + p * k_stride], bv, acc[r]);
    }
    for (std::size_t r = 0; r < R; ++r) c[r * ldc + j] += acc[r];
  }
}

#if defined(__AVX512F__)
constexpr std::size_t kLanes = 8;
using Vec = __m512d;
inline Vec vzero() { return _mm512_setzero_pd(); }
inline Vec vload(const double* p) { return _mm512_loadu_pd(p); }
inline void vstore(double* p, Vec v) { _mm512_storeu_pd(p, v); }
inline Vec vbroadcast(double x) { return _mm512_set1_pd(x); }
inline Vec vfma(Vec a, Vec b, Vec c) { return _mm512_fmadd_pd(a, b, c); }
inline Vec vadd(Vec a, Vec b) { return _mm512_add_pd(a, b); }
#define INFILLGEN_SIMD_GEMM 1
#elif defined(__AVX2__) && defined(__FMA__)
constexpr std::size_t kLanes = 4;
using Vec = __m256d;
inline Vec vzero() { return _mm256_setzero_pd(); }
inline Vec vload(const double* p) { return _mm256_loadu_pd(p); }
inline void vstore(double* p, Vec v) { _mm256_storeu_pd(p, v); }
inline Vec vbroadcast(double x) { return _mm256_set1_pd(x); }
inline Vec vfma(Vec a, Vec b, Vec c) { return _mm256_fmadd_pd(a, b, c); }
inline Vec vadd(Vec a, Vec b) { return _mm256_add_pd(a, b); }
#define INFILLGEN_SIMD_GEMM 1
#endif

#ifdef INFILLGEN_SIMD_GEMM
constexpr std::size_t kPanel = 2 * kLanes;

// R rows x kPanel columns held in registers while k streams.
template <std::size_t R>
void simd_block(const double* __restrict a, std::size_t row_stride, std::size_t k_stride,
                const double* __restrict b, std::size_t ldb, double* __restrict c,
                std::size_t ldc, std::size_t k) {
  Vec lo[R], hi[R];
  for (std::size_t r = 0; r < R; ++r) lo[r] = hi[r] = vzero();
  for (std::size_t p = 0; p < k; ++p) {
    const Vec b0 = vload(b + p * ldb);
    const Vec b1 = vload(b + p * ldb + kLanes);
    for (std::size_t r = 0; r < R; ++r) {
      const Vec av = vbroadcast(a[r * row_stride + p * k_stride]);
      lo[r] = vfma(av, b0, lo[r]);
      hi[r] = vfma(av, b1, hi[r]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    double* out = c + r * ldc;
    vstore(out, vadd(vload(out), lo[r]));
    vstore(out + kLanes, vadd(vload(out + kLanes), hi[r]));
  }
}
#endif

template <std::size_t R>
void row_panel(const double* a, std::size_t row_stride, std::size_t k_stride, const double* b,
               double* c, std::size_t k, std::size_t n) {
  std::size_t j = 0;
#ifdef INFILLGEN_SIMD_GEMM
  for (; j + kPanel <= n; j += kPanel) simd_block<R>(a, row_stride, k_stride, b + j, n, c + j, n, k);
#endif
  if (j < n) scalar_block<R>(a, row_stride, k_stride, b + j, n, c + j, n, k, n - j);
}

constexpr std::size_t kRowBlock = 6;

void gemm(const double* a, std::size_t row_stride, std::size_t k_stride, const double* b,
          double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + kRowBlock <= m; i += kRowBlock) {
    row_panel<kRowBlock>(a + i * row_stride, row_stride, k_stride, b, c + i * n, k, n);
  }
  for (; i < m; ++i) row_panel<1>(a + i * row_stride, row_stride, k_stride, b, c + i * n, k, n);
}

// c[m x n] += a[m x k] * b[k x n], row-major.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  gemm(a, k, 1, b, c, m, k, n);
}

// c[m x n] += a^T * b with a stored [k x m].
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  gemm(a, 1, m, b, c, m, k, n);
}

}  // namespace

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose", "input");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out(Shape{c, r});
  const double* src = a.raw();
  double* dst = out.raw();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  require_rank2(a, "matmul", "lhs");
  require_rank2(b, "matmul", "rhs");
  const std::size_t m = transpose_a ? a.shape()[1] : a.shape()[0];
  const std::size_t ka = transpose_a ? a.shape()[0] : a.shape()[1];
  const std::size_t kb = transpose_b ? b.shape()[1] : b.shape()[0];
  const std::size_t n = transpose_b ? b.shape()[0] : b.shape()[1];
  if (ka != kb) {
    throw ShapeError("matmul: inner dimensions differ (lhs " + shape_to_string(a.shape()) +
                     (transpose_a ? "^T" : "") + ", rhs " + shape_to_string(b.shape()) +
                     (transpose_b ? "^T" : "") + ")");
  }
  Tensor out(Shape{m, n});
  const Tensor bt = transpose_b ? transpose(b) : Tensor{};
  const double* bp = transpose_b ? bt.raw() : b.raw();
  if (transpose_a) {
    gemm_tn(a.raw(), bp, out.raw(), m, ka, n);
  } else {
    gemm_nn(a.raw(), bp, out.raw(), m, ka, n);
  }
  return out;
}

void add_row_bias(Tensor& a, const Tensor& bias) {
  if (bias.numel() != a.cols()) {
    throw ShapeError("add_row_bias: bias " + shape_to_string(bias.shape()) +
                     " does not match columns of " + shape_to_string(a.shape()));
  }
  const std::size_t c = a.cols();
  const std::size_t r = a.numel() / std::max<std::size_t>(c, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) a[i * c + j] += bias[j];
}

Tensor layer_norm(const Tensor& x, double eps) {
  const std::size_t c = x.cols();
  const std::size_t r = x.numel() / std::max<std::size_t>(c, 1);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.raw() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* o = out.raw() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] = (row[j] - mean) * inv;
  }
  return out;
}

Tensor layer_norm_affine(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (gain.numel() != x.cols() || bias.numel() != x.cols()) {
    throw ShapeError("layer_norm: gain/bias width does not match " + shape_to_string(x.shape()));
  }
  Tensor out = layer_norm(x, eps);
  const std::size_t c = x.cols();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] * gain[i % c] + bias[i % c];
  return out;
}

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) noexcept {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = gelu(x[i]);
  return out;
}

SoftmaxResult softmax_masked(const Tensor& logits, const Tensor& mask, double sentinel) {
  const std::size_t c = logits.cols();
  const std::size_t r = logits.numel() / std::max<std::size_t>(c, 1);
  const bool broadcast = mask.numel() == c && mask.rows() == 1;
  if (!broadcast && mask.shape() != logits.shape()) {
    throw ShapeError("softmax_masked: mask " + shape_to_string(mask.shape()) +
                     " not broadcastable to logits " + shape_to_string(logits.shape()));
  }
  SoftmaxResult result{Tensor(logits.shape()), {}};
  for (std::size_t i = 0; i < r; ++i) {
    const double* lrow = logits.raw() + i * c;
    const double* mrow = mask.raw() + (broadcast ? 0 : i * c);
    double* prow = result.probs.raw() + i * c;
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!is_masked(mrow[j], sentinel)) row_max = std::max(row_max, lrow[j] + mrow[j]);
    }
    if (row_max == -std::numeric_limits<double>::infinity()) {
      result.fully_masked_rows.push_back(i);
      continue;  // row stays all-zero
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (is_masked(mrow[j], sentinel)) {
        prow[j] = 0.0;
      } else {
        prow[j] = std::exp(lrow[j] + mrow[j] - row_max);
        total += prow[j];
      }
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < c; ++j) prow[j] *= inv;
  }
  return result;
}

Tensor log_softmax(const Tensor& logits) {
  const std::size_t c = logits.cols();
  const std::size_t r = logits.numel() / std::max<std::size_t>(c, 1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = logits.raw() + i * c;
    const double row_max = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - row_max);
    const double log_z = row_max + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - log_z;
  }
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const std::uint32_t> ids) {
  require_rank2(table, "embedding_lookup", "table");
  const std::size_t c = table.shape()[1];
  Tensor out(Shape{ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.shape()[0]) {
      throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) +
                       " out of range for table " + shape_to_string(table.shape()));
    }
    std::copy_n(table.raw() + ids[i] * c, c, out.raw() + i * c);
  }
  return out;
}

}  // namespace infillgen::tensor::kernels
