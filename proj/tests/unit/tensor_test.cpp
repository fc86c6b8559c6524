// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "finite_diff.hpp"
#include "infillgen/error.hpp"
#include "infillgen/tensor/adam.hpp"
#include "infillgen/tensor/checkpoint.hpp"
#include "infillgen/tensor/kernels.hpp"
#include "infillgen/tensor/ops.hpp"
#include "test_support.hpp"

namespace infillgen::tensor {
namespace {

using testing::check_gradients;
using testing::TempDir;

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, scale);
  for (double& v : t.data()) v = d(rng);
  return t;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out(Shape{a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k)
        acc += static_cast<long double>(a.at(i, k)) * b.at(k, j);
      out.at(i, j) = static_cast<double>(acc);
    }
  return out;
}

TEST(Matmul, HandComputedProduct) {
  const Tensor c = kernels::matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5, 6}, {7, 8}}));
  EXPECT_EQ(c, Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(rng, {3, 3});
  const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_EQ(kernels::matmul(eye, x), x);
  EXPECT_EQ(kernels::matmul(x, eye), x);
}

TEST(Matmul, TransposeFlagsMatchExplicitTranspose) {
  std::mt19937_64 rng(2);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const std::size_t m = testing::uniform(rng, 1, 23), k = testing::uniform(rng, 1, 19),
                      n = testing::uniform(rng, 1, 29);
    const Tensor a = random_tensor(rng, {m, k});
    const Tensor b = random_tensor(rng, {k, n});
    const Tensor expected = naive_matmul(a, b);
    EXPECT_LE(max_abs_diff(kernels::matmul(a, b), expected), 1e-12);
    EXPECT_LE(max_abs_diff(kernels::matmul(kernels::transpose(a), b, true, false), expected), 1e-12);
    EXPECT_LE(max_abs_diff(kernels::matmul(a, kernels::transpose(b), false, true), expected), 1e-12);
    EXPECT_LE(max_abs_diff(kernels::matmul(kernels::transpose(a), kernels::transpose(b), true, true),
                           expected),
              1e-12);
  }
}

TEST(Matmul, RowValuesIndependentOfBatchRows) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor(rng, {17, 37});
  const Tensor b = random_tensor(rng, {37, 21});
  const Tensor full = kernels::matmul(a, b);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    Tensor row(Shape{1, a.cols()});
    for (std::size_t c = 0; c < a.cols(); ++c) row.at(0, c) = a.at(r, c);
    const Tensor single = kernels::matmul(row, b);
    for (std::size_t c = 0; c < b.cols(); ++c) EXPECT_EQ(single.at(0, c), full.at(r, c));
  }
}

TEST(Matmul, InnerDimensionMismatchNamesShapes) {
  try {
    kernels::matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[2, 3]"), std::string::npos) << what;
    EXPECT_NE(what.find("[4, 2]"), std::string::npos) << what;
  }
}

TEST(LayerNorm, ConstantRowNormalisesToZero) {
  const Tensor y = kernels::layer_norm(Tensor::matrix({{3.5, 3.5, 3.5, 3.5}}), 1e-12);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  std::mt19937_64 rng(4);
  const Tensor y = kernels::layer_norm(random_tensor(rng, {5, 16}, 3.0), 1e-12);
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mean += y.at(r, c);
    mean /= 16.0;
    for (std::size_t c = 0; c < 16; ++c) sq += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 16.0, 1.0, 1e-9);
  }
}

TEST(Gelu, MatchesErfDefinition) {
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.4, 2.5}) {
    const long double lx = x;
    const long double expected = 0.5L * lx * (1.0L + std::erf(lx / std::sqrt(2.0L)));
    EXPECT_NEAR(kernels::gelu(x), static_cast<double>(expected), 1e-15);
  }
}

TEST(Softmax, UniformLogitsGiveUniformProbabilities) {
  const auto r = kernels::softmax_masked(Tensor::matrix({{0.3, 0.3, 0.3, 0.3}}), Tensor(Shape{1, 4}));
  for (double p : r.probs.data()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Softmax, SingleUnmaskedKeyGetsAllMass) {
  const Tensor mask = Tensor::matrix({{0.0, kernels::kMaskSentinel}});
  const auto r = kernels::softmax_masked(Tensor::matrix({{1.0, 1.0}}), mask);
  EXPECT_EQ(r.probs.at(0, 0), 1.0);
  EXPECT_EQ(r.probs.at(0, 1), 0.0);
}

TEST(Softmax, AgreesWithExtendedPrecisionOracle) {
  const double logits[] = {0.5, 1.5, -0.5};
  long double z = 0.0L;
  for (double l : logits) z += std::exp(static_cast<long double>(l));
  const auto r = kernels::softmax_masked(Tensor::matrix({{0.5, 1.5, -0.5}}), Tensor(Shape{1, 3}));
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = static_cast<double>(std::exp(static_cast<long double>(logits[i])) / z);
    EXPECT_NEAR(r.probs.at(0, i), expected, 1e-12);
  }
}

TEST(Softmax, FullyMaskedRowRejectedWhenDisallowed) {
  Graph g;
  const Var x = g.leaf(Tensor::matrix({{1.0, 2.0}}));
  const Tensor mask(Shape{1, 2}, kernels::kMaskSentinel);
  EXPECT_THROW(softmax_masked(x, mask, {.allow_fully_masked = false}), UsageError);
  const Var y = softmax_masked(x, mask);
  EXPECT_EQ(y.value().at(0, 0), 0.0);
  EXPECT_EQ(y.value().at(0, 1), 0.0);
}

TEST(CrossEntropy, ConfidentCorrectPredictionHasNearZeroLoss) {
  Graph g;
  const Var logits = g.leaf(Tensor::matrix({{60.0, 0.0, 0.0}}));
  EXPECT_LT(cross_entropy_label_smoothed(logits, {0}, 0.0).value().item(), 1e-25);
}

TEST(CrossEntropy, UniformLogitsGiveLogV) {
  Graph g;
  const Var logits = g.leaf(Tensor(Shape{2, 7}, 0.25));
  EXPECT_NEAR(cross_entropy_label_smoothed(logits, {1, 5}, 0.0).value().item(), std::log(7.0), 1e-15);
}

TEST(CrossEntropy, SmoothedThreeClassMatchesFormula) {
  Graph g;
  const Var logits = g.leaf(Tensor::matrix({{2.0, 0.0, 0.0}}));
  const double loss = cross_entropy_label_smoothed(logits, {0}, 0.1).value().item();
  const long double z = std::exp(2.0L) + 2.0L;
  const long double lp0 = 2.0L - std::log(z), lp_other = -std::log(z);
  const long double q0 = 0.9L + 0.1L / 3.0L, q_other = 0.1L / 3.0L;
  const long double expected = -(q0 * lp0 + 2.0L * q_other * lp_other);
  EXPECT_NEAR(loss, static_cast<double>(expected), 1e-12);
}

TEST(CrossEntropy, AllPositionsIgnoredIsAnError) {
  Graph g;
  const Var logits = g.leaf(Tensor(Shape{2, 3}));
  EXPECT_THROW(cross_entropy_label_smoothed(logits, {0, 1}, 0.1, {1, 1}), UsageError);
}

TEST(CrossEntropy, IgnoredRowsDoNotContribute) {
  std::mt19937_64 rng(5);
  const Tensor lv = random_tensor(rng, {3, 4});
  Graph g;
  const Var all = g.leaf(lv);
  const double masked = cross_entropy_label_smoothed(all, {1, 2, 3}, 0.2, {0, 1, 0}).value().item();
  Tensor kept(Shape{2, 4});
  for (std::size_t c = 0; c < 4; ++c) {
    kept.at(0, c) = lv.at(0, c);
    kept.at(1, c) = lv.at(2, c);
  }
  const double direct = cross_entropy_label_smoothed(g.leaf(kept), {1, 3}, 0.2).value().item();
  EXPECT_NEAR(masked, direct, 1e-15);
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  const Var x = g.leaf(Tensor(Shape{2, 3}, 1.7), true);
  g.backward(sum(x));
  EXPECT_EQ(g.grad(x), Tensor(Shape{2, 3}, 1.0));
}

TEST(Backward, UnrelatedLeafGetsZeros) {
  Graph g;
  const Var x = g.leaf(Tensor(Shape{2, 2}, 1.0), true);
  const Var y = g.leaf(Tensor(Shape{3, 1}, 2.0), true);
  g.backward(sum(mul(x, x)));
  EXPECT_EQ(g.grad(y), Tensor(Shape{3, 1}, 0.0));
}

TEST(Backward, NonScalarLossIsAnError) {
  Graph g;
  const Var x = g.leaf(Tensor(Shape{2, 2}, 1.0), true);
  EXPECT_THROW(g.backward(x), UsageError);
}

TEST(Backward, SecondSweepIsAnError) {
  Graph g;
  const Var x = g.leaf(Tensor(Shape{1, 2}, 1.0), true);
  const Var loss = sum(x);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), UsageError);
}

TEST(Backward, CheckFiniteNamesTheOp) {
  Graph g;
  g.set_check_finite(true);
  const Var x = g.leaf(Tensor::matrix({{1e300}}), true);
  try {
    mul(x, x);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos);
  }
}

TEST(Backward, MaskedSoftmaxMlpMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const Tensor mask = Tensor::matrix({{0, 0, kernels::kMaskSentinel}, {0, 0, 0}, {0, kernels::kMaskSentinel, 0}});
  const testing::LossBuilder build = [&](Graph&, std::span<const Var> in) {
    Var h = gelu(add(matmul(in[0], in[1]), in[2]));
    Var scores = matmul(h, h, false, true);
    Var attn = matmul(softmax_masked(scores, mask), h);
    Var out = add(matmul(layer_norm(attn, 1e-6), in[3]), in[2]);
    return sum(mul(out, out));
  };
  const auto result = check_gradients(
      build, {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 4}, 0.5),
              random_tensor(rng, {1, 4}), random_tensor(rng, {4, 4}, 0.5)});
  EXPECT_LT(result.max_rel_error, 1e-4);
}

TEST(Backward, ConcatSliceEmbeddingDropoutMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const testing::LossBuilder build = [&](Graph&, std::span<const Var> in) {
    const Var parts[] = {in[0], slice(in[1], 1, 1, 4)};
    Var joined = concat(parts, 0);
    Var looked = embedding_lookup(joined, {0, 3, 3, 1, 4});
    Var dropped = dropout(looked, 0.3, 99);
    Var t = transpose(scale(dropped, 1.5));
    return cross_entropy_label_smoothed(matmul(looked, t), {0, 1, 2, 3, 4}, 0.1, {0, 0, 1, 0, 0});
  };
  const auto result =
      check_gradients(build, {random_tensor(rng, {2, 3}), random_tensor(rng, {3, 5})});
  EXPECT_LT(result.max_rel_error, 1e-4);
}

TEST(Dropout, ZeroRateReturnsInputAndSeedsAreReproducible) {
  Graph g;
  const Var x = g.leaf(Tensor(Shape{4, 8}, 1.0));
  EXPECT_EQ(dropout(x, 0.0, 1).id, x.id);
  const Tensor a = dropout(x, 0.5, 42).value();
  const Tensor b = dropout(x, 0.5, 42).value();
  EXPECT_EQ(a, b);
  for (double v : a.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::mt19937_64 rng(8);
  std::vector<Tensor> params{random_tensor(rng, {3, 2}), random_tensor(rng, {5})};
  const std::vector<Tensor> before = params;
  std::vector<Tensor> grads{Tensor(Shape{3, 2}), Tensor(Shape{5})};
  AdamState state = AdamState::zeros_like(params);
  OptimizerConfig cfg;
  cfg.warmup_steps = 2;
  cfg.total_steps = 10;
  for (std::uint64_t step = 1; step <= 3; ++step) adam_step(params, grads, state, cfg, step);
  EXPECT_EQ(params, before);
}

TEST(Adam, LearningRateAtWarmupBoundaryIsPeak) {
  OptimizerConfig cfg;
  cfg.peak_lr = 3e-4;
  cfg.warmup_steps = 7;
  cfg.total_steps = 20;
  EXPECT_EQ(learning_rate(cfg, 7), 3e-4);
  EXPECT_LT(learning_rate(cfg, 6), 3e-4);
  EXPECT_LT(learning_rate(cfg, 8), 3e-4);
  EXPECT_EQ(learning_rate(cfg, 20), 0.0);
}

TEST(Adam, ScalarTwoStepOracle) {
  OptimizerConfig cfg;
  cfg.peak_lr = 0.1;
  cfg.warmup_steps = 1;
  cfg.total_steps = 5;
  std::vector<Tensor> params{Tensor::vector({0.7})};
  const std::vector<Tensor> grads{Tensor::vector({1.0})};
  AdamState state = AdamState::zeros_like(params);
  adam_step(params, grads, state, cfg, 1);
  adam_step(params, grads, state, cfg, 2);

  // Independent scalar Adam with the linear schedule written out.
  long double p = 0.7L, m = 0.0L, v = 0.0L;
  const long double b1 = 0.9L, b2 = 0.999L, eps = 1e-9L;
  const long double lrs[] = {0.1L, 0.1L * 3.0L / 4.0L};
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * 1.0L;
    v = b2 * v + (1 - b2) * 1.0L;
    const long double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    p -= lrs[t - 1] * mh / (std::sqrt(vh) + eps);
  }
  EXPECT_NEAR(params[0][0], static_cast<double>(p), 1e-12);
}

TEST(Adam, ElementwiseUpdateEqualsScalarUpdates) {
  std::mt19937_64 rng(9);
  OptimizerConfig cfg;
  cfg.peak_lr = 0.01;
  cfg.warmup_steps = 2;
  cfg.total_steps = 10;
  std::vector<Tensor> params{random_tensor(rng, {2, 3})};
  std::vector<Tensor> scalars;
  for (double v : params[0].data()) scalars.push_back(Tensor::vector({v}));
  AdamState joint = AdamState::zeros_like(params);
  AdamState separate = AdamState::zeros_like(scalars);
  for (std::uint64_t step = 1; step <= 4; ++step) {
    const Tensor g = random_tensor(rng, {2, 3});
    adam_step(params, std::vector<Tensor>{g}, joint, cfg, step);
    std::vector<Tensor> gs;
    for (double v : g.data()) gs.push_back(Tensor::vector({v}));
    adam_step(scalars, gs, separate, cfg, step);
  }
  for (std::size_t i = 0; i < scalars.size(); ++i) EXPECT_EQ(params[0][i], scalars[i][0]);
}

TEST(Adam, InvalidScheduleRejected) {
  OptimizerConfig cfg;
  cfg.warmup_steps = 10;
  cfg.total_steps = 5;
  EXPECT_THROW(cfg.validate(), UsageError);
  EXPECT_THROW(learning_rate(OptimizerConfig{}, 0), UsageError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  std::mt19937_64 rng(10);
  Checkpoint ck;
  ck.metadata["note"] = "hello";
  ck.tensors.emplace_back("a", random_tensor(rng, {3, 4}));
  ck.tensors.emplace_back("b", Tensor::scalar(std::numeric_limits<double>::denorm_min()));
  save_checkpoint(dir / "x.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "x.ckpt");
  EXPECT_EQ(back.metadata, ck.metadata);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(*back.find("a"), ck.tensors[0].second);
  EXPECT_EQ(*back.find("b"), ck.tensors[1].second);
  EXPECT_EQ(back.find("c"), nullptr);
}

TEST(Checkpoint, CorruptedPayloadAndMissingFileRejected) {
  TempDir dir;
  Checkpoint ck;
  ck.tensors.emplace_back("a", Tensor(Shape{8}, 1.0));
  save_checkpoint(dir / "x.ckpt", ck);
  {
    std::fstream f(dir / "x.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::streamoff>(f.tellg());
    f.seekp(size - 20);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint(dir / "x.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST(Determinism, RepeatedComputationIsBitIdentical) {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor(rng, {9, 13});
  const Tensor b = random_tensor(rng, {13, 7});
  const auto run = [&] {
    Graph g;
    const Var x = g.leaf(a, true);
    const Var w = g.leaf(b, true);
    const Var loss = sum(gelu(layer_norm(matmul(x, w), 1e-6)));
    g.backward(loss);
    return std::make_pair(g.grad(x), g.grad(w));
  };
  EXPECT_EQ(run(), run());
}

TEST(Shapes, BroadcastMismatchNamesShapes) {
  Graph g;
  const Var a = g.leaf(Tensor(Shape{2, 3}));
  const Var b = g.leaf(Tensor(Shape{2, 4}));
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[2, 3]"), std::string::npos) << what;
    EXPECT_NE(what.find("[2, 4]"), std::string::npos) << what;
  }
}

}  // namespace
}  // namespace infillgen::tensor
