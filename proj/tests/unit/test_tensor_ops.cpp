#include <gtest/gtest.h>

#include <cmath>

#include "almrr/ops.hpp"
#include "almrr/param_store.hpp"
#include "support/oracles.hpp"

using namespace almrr;
using oracle::TensorD;

TEST(Tensor, FromRejectsWrongLength) {
  EXPECT_THROW(TensorD::from({2, 3}, std::vector<double>(5)), ShapeError);
}

TEST(Tensor, BackwardAccumulatesLeafGradsAcrossCalls) {
  auto x = TensorD::from({3}, {1.0, 2.0, 3.0}, true);
  ops::sum(ops::square(x)).backward();
  ops::sum(ops::square(x)).backward();
  ASSERT_TRUE(x.has_grad());
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 12.0);
}

TEST(Tensor, SharedSubexpressionGetsBothContributions) {
  auto x = TensorD::from({2}, {1.5, -2.0}, true);
  const auto y = ops::mul(x, x);
  ops::sum(ops::add(y, y)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
}

TEST(Tensor, NoGradGuardDropsGraph) {
  auto x = TensorD::from({2}, {1.0, 2.0}, true);
  TensorD y;
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    y = ops::square(x);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, BackwardRequiresScalar) {
  auto x = TensorD::from({2}, {1.0, 2.0}, true);
  EXPECT_THROW(ops::square(x).backward(), ShapeError);
}

TEST(Ops, ElementwiseShapeMismatchThrows) {
  auto a = TensorD::zeros({2, 3});
  auto b = TensorD::zeros({3, 2});
  EXPECT_THROW(ops::add(a, b), ShapeError);
  EXPECT_THROW(ops::mul(a, b), ShapeError);
}

TEST(Ops, SoftplusAndSigmoidStableAtExtremes) {
  auto x = TensorD::from({4}, {-800.0, -30.0, 30.0, 800.0});
  const auto sp = ops::softplus(x);
  const auto sg = ops::sigmoid(x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(std::isfinite(sp[i]));
    EXPECT_TRUE(std::isfinite(sg[i]));
  }
  EXPECT_DOUBLE_EQ(sp[3], 800.0);
  EXPECT_DOUBLE_EQ(sg[3], 1.0);
  EXPECT_GE(sg[0], 0.0);
}

TEST(Ops, LinearMatchesLoops) {
  Rng rng(1);
  const auto x = oracle::random_tensor(rng, {5, 7}, 1.0, false);
  const auto w = oracle::random_tensor(rng, {3, 7}, 1.0, false);
  const auto b = oracle::random_tensor(rng, {3}, 1.0, false);
  const auto y = ops::linear(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{5, 3}));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t o = 0; o < 3; ++o) {
      double s = b[o];
      for (std::size_t k = 0; k < 7; ++k) s += x[i * 7 + k] * w[o * 7 + k];
      EXPECT_NEAR(y[i * 3 + o], s, 1e-12);
    }
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(2);
  const auto a = oracle::random_tensor(rng, {4, 9}, 5.0, false);
  const auto s = ops::softmax_rows(a);
  for (std::size_t r = 0; r < 4; ++r) {
    double t = 0.0;
    for (std::size_t c = 0; c < 9; ++c) t += s[r * 9 + c];
    EXPECT_NEAR(t, 1.0, 1e-14);
  }
}

TEST(Ops, Conv2dMatchesDirectLoops) {
  Rng rng(3);
  for (int stride : {1, 2})
    for (int pad : {0, 1})
      for (std::size_t k : {1u, 3u}) {
        const auto in = oracle::random_tensor(rng, {3, 9, 8}, 1.0, false);
        const auto ker = oracle::random_tensor(rng, {4, 3, k, k}, 1.0, false);
        const auto bias = oracle::random_tensor(rng, {4}, 1.0, false);
        const auto out = ops::conv2d(in, ker, bias, stride, pad);
        std::size_t oh, ow;
        const auto ref = oracle::conv2d(in.vec(), 3, 9, 8, ker.vec(), 4, k, bias.vec(), stride, pad, &oh, &ow);
        ASSERT_EQ(out.shape(), (Shape{4, oh, ow}));
        EXPECT_LT(oracle::max_abs_diff(out.vec(), ref), 1e-12);
      }
}

TEST(Ops, ConvTransposeMatchesScatterLoops) {
  Rng rng(4);
  for (int stride : {1, 2})
    for (int pad : {0, 1})
      for (std::size_t k : {2u, 3u}) {
        const auto in = oracle::random_tensor(rng, {3, 5, 6}, 1.0, false);
        const auto ker = oracle::random_tensor(rng, {3, 2, k, k}, 1.0, false);
        const auto bias = oracle::random_tensor(rng, {2}, 1.0, false);
        const auto out = ops::conv_transpose2d(in, ker, bias, stride, pad);
        const auto ref = oracle::conv_transpose2d(in.vec(), 3, 5, 6, ker.vec(), 2, k, bias.vec(), stride, pad);
        EXPECT_EQ(out.dim(1), (5 - 1) * stride + k - 2 * pad);
        EXPECT_LT(oracle::max_abs_diff(out.vec(), ref), 1e-12);
      }
}

TEST(Ops, ConvTransposeIsAdjointOfConv) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int stride = 1 + trial % 2, pad = trial % 3 == 0 ? 1 : 0;
    const std::size_t k = 3;
    const auto x = oracle::random_tensor(rng, {3, 9, 9}, 1.0, false);
    const auto ker = oracle::random_tensor(rng, {4, 3, k, k}, 1.0, false);
    const auto cx = ops::conv2d(x, ker, TensorD{}, stride, pad);
    const auto y = oracle::random_tensor(rng, cx.shape(), 1.0, false);
    // conv2d kernel Cout x Cin x k x k is the transposed conv kernel Cin' x Cout'.
    const auto ty = ops::conv_transpose2d(y, ker, TensorD{}, stride, pad);
    ASSERT_EQ(ty.dim(0), 3u);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
    // The transposed output can be smaller than x when (H + 2p - k) % s != 0.
    const std::size_t th = ty.dim(1), tw = ty.dim(2);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t r = 0; r < th; ++r)
        for (std::size_t q = 0; q < tw; ++q) rhs += x[(c * 9 + r) * 9 + q] * ty[(c * th + r) * tw + q];
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Ops, CausalConvReadsOnlyThePast) {
  Rng rng(6);
  const auto seq = oracle::random_tensor(rng, {6, 3}, 1.0, false);
  const auto ker = oracle::random_tensor(rng, {3, 4}, 1.0, false);
  const auto bias = oracle::random_tensor(rng, {3}, 1.0, false);
  const auto out = ops::conv1d_causal_depthwise(seq, ker, bias);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t d = 0; d < 3; ++d) {
      double s = bias[d];
      for (std::size_t j = 0; j < 4; ++j) {
        const long src = static_cast<long>(t) - 3 + static_cast<long>(j);
        if (src >= 0) s += ker[d * 4 + j] * seq[static_cast<std::size_t>(src) * 3 + d];
      }
      EXPECT_NEAR(out[t * 3 + d], s, 1e-13);
    }
}

TEST(Ops, MaxPoolPicksWindowMaximum) {
  const auto x = TensorD::from({1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 7});
  const auto y = ops::maxpool2x2(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(y[0], 5.0);
  EXPECT_EQ(y[1], 8.0);
}

TEST(Ops, LayerNormStatistics) {
  Rng rng(7);
  const auto x = oracle::random_tensor(rng, {5, 16}, 3.0, false);
  const auto y = ops::normalize(x, ops::NormKind::layer);
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 16; ++c) m += y[r * 16 + c];
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y[r * 16 + c] - m) * (y[r * 16 + c] - m);
    v /= 16;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-5);
  }
}

TEST(Ops, InstanceNormPerChannel) {
  Rng rng(8);
  const auto x = oracle::random_tensor(rng, {3, 4, 5}, 2.0, false);
  const auto y = ops::normalize(x, ops::NormKind::instance);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0;
    for (std::size_t i = 0; i < 20; ++i) m += y[c * 20 + i];
    EXPECT_NEAR(m / 20, 0.0, 1e-12);
  }
}

TEST(Ops, BilinearKeepsConstantFieldsExact) {
  const auto x = TensorD::full({2, 5, 7}, 0.3);
  const auto y = ops::bilinear_resize(x, 13, 4);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], 0.3);
}

TEST(Ops, BilinearHalfPixelUpsample) {
  // 1 x 1 x 2 -> 1 x 1 x 4 with half-pixel centres: [a, .75a+.25b, .25a+.75b, b]
  const auto x = TensorD::from({1, 1, 2}, {0.0, 1.0});
  const auto y = ops::bilinear_resize(x, 1, 4);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 0.25);
  EXPECT_DOUBLE_EQ(y[2], 0.75);
  EXPECT_DOUBLE_EQ(y[3], 1.0);
}

TEST(Ops, ChannelReductions) {
  const auto x = TensorD::from({2, 1, 2}, {3.0, 0.0, 4.0, 0.0});
  const auto l2 = ops::channel_l2(x);
  const auto m = ops::channel_mean(x);
  EXPECT_DOUBLE_EQ(l2[0], 5.0);
  EXPECT_DOUBLE_EQ(l2[1], 0.0);
  EXPECT_DOUBLE_EQ(m[0], 3.5);
}

TEST(Ops, ChannelL2SubgradientAtZero) {
  auto x = TensorD::from({2, 1, 1}, {0.0, 0.0}, true);
  ops::sum(ops::channel_l2(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Ops, ForwardIsDeterministic) {
  Rng rng(9);
  const auto in = oracle::random_tensor(rng, {4, 12, 12}, 1.0, false);
  const auto ker = oracle::random_tensor(rng, {6, 4, 3, 3}, 1.0, false);
  const auto a = ops::conv2d(in, ker, TensorD{}, 1, 1);
  const auto b = ops::conv2d(in, ker, TensorD{}, 1, 1);
  EXPECT_EQ(a.vec(), b.vec());
}

TEST(ParamStore, AdamStepMatchesFormula) {
  ParamStore<double> store;
  auto p = store.add("w", {2}, {1.0, -1.0});
  store.add("frozen", {1}, {5.0}, true);
  const AdamOptions opt{0.1, 0.9, 0.999, 1e-8};
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -1.0};
  for (int step = 1; step <= 3; ++step) {
    ops::sum(ops::square(p)).backward();
    adam_step(store, opt);
    for (int i = 0; i < 2; ++i) {
      const double g = 2.0 * w[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    EXPECT_NEAR(p[0], w[0], 1e-14);
    EXPECT_NEAR(p[1], w[1], 1e-14);
  }
  EXPECT_EQ(store.get("frozen")[0], 5.0);
  EXPECT_EQ(store.step_count(), 3u);
}

TEST(ParamStore, DuplicateNameAndMissingGradThrow) {
  ParamStore<double> store;
  store.add("w", {1}, {1.0});
  EXPECT_THROW(store.add("w", {1}, {1.0}), ArgumentError);
  EXPECT_THROW(adam_step(store, AdamOptions{}), ArgumentError);
}
