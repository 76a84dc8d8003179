#include <gtest/gtest.h>

#include <cmath>

#include "almrr/objectives.hpp"
#include "support/oracles.hpp"

using namespace almrr;
using oracle::TensorD;

namespace {

Mask mask_of(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) {
  Mask m(h, w);
  m.data = std::move(v);
  return m;
}

TensorD map_of(std::size_t h, std::size_t w, std::vector<double> v) { return TensorD::from({1, h, w}, std::move(v)); }

}  // namespace

TEST(RecLoss, SinglePositionDistance) {
  // One grid position differs by the vector (3, 4): loss = 5 / (H0 * W0).
  auto phi = TensorD::zeros({2, 3, 4});
  std::vector<double> v(24, 0.0);
  v[0 * 12 + 5] = 3.0;
  v[1 * 12 + 5] = 4.0;
  EXPECT_DOUBLE_EQ(rec_loss(TensorD::from({2, 3, 4}, v), phi).item(), 5.0 / 12.0);
}

TEST(RecLoss, MatchesLoopOracle) {
  Rng rng(1);
  const auto a = oracle::random_tensor(rng, {7, 5, 6}, 1.0, false);
  const auto b = oracle::random_tensor(rng, {7, 5, 6}, 1.0, false);
  double total = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += std::pow(a[c * 30 + i] - b[c * 30 + i], 2);
    total += std::sqrt(s);
  }
  EXPECT_NEAR(rec_loss(a, b).item(), total / 30.0, 1e-14);
  EXPECT_EQ(rec_loss(a, a).item(), 0.0);
  EXPECT_THROW(rec_loss(a, TensorD::zeros({7, 6, 5})), ShapeError);
}

TEST(FocalLoss, PerfectPredictionIsNearZero) {
  const auto m = mask_of(2, 2, {1, 0, 0, 1});
  EXPECT_LT(focal_loss(map_of(2, 2, {1.0, 0.0, 0.0, 1.0}), m).item(), 1e-5);
}

TEST(FocalLoss, HandComputedValue) {
  const auto m = mask_of(2, 2, {1, 0, 1, 0});
  EXPECT_NEAR(focal_loss(map_of(2, 2, {0.9, 0.2, 0.6, 0.1}), m).item(), 0.016146028880409814, 1e-15);
}

TEST(FocalLoss, GammaZeroIsScaledCrossEntropy) {
  Rng rng(2);
  Mask m(4, 5);
  std::vector<double> p(20);
  double bce = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    m.data[i] = uniform01(rng) < 0.5;
    p[i] = uniform(rng, 0.01, 0.99);
    bce += -(m.data[i] ? std::log(p[i]) : std::log(1.0 - p[i]));
  }
  bce /= 20.0;
  FocalOptions opt;
  opt.gamma = 0.0;
  opt.alpha_pos = 0.5;
  EXPECT_NEAR(focal_loss(map_of(4, 5, p), m, opt).item(), 0.5 * bce, 1e-14);
}

TEST(FocalLoss, DecreasesAsPositivesGainConfidence) {
  const auto m = mask_of(1, 2, {1, 0});
  double prev = INFINITY;
  for (double q : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    const double l = focal_loss(map_of(1, 2, {q, 0.2}), m).item();
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(FocalLoss, ValidatesMask) {
  EXPECT_THROW(focal_loss(map_of(1, 2, {0.5, 0.5}), mask_of(1, 3, {0, 0, 1})), ShapeError);
  EXPECT_THROW(focal_loss(map_of(1, 2, {0.5, 0.5}), mask_of(1, 2, {0, 2})), ArgumentError);
}

TEST(DiceLoss, ReferenceCases) {
  const auto m = mask_of(2, 2, {1, 1, 0, 0});
  EXPECT_NEAR(dice_loss(map_of(2, 2, {1.0, 1.0, 0.0, 0.0}), m).item(), 0.0, 1e-15);
  DiceOptions exact;
  exact.eps = 0.0;
  // |pred| = |gt| = 2 with one pixel in common.
  EXPECT_DOUBLE_EQ(dice_loss(map_of(2, 2, {1.0, 0.0, 1.0, 0.0}), m, exact).item(), 0.5);
  // Empty prediction against 1999 positive pixels.
  Mask big(1, 2000, 1);
  big.data[0] = 0;
  EXPECT_NEAR(dice_loss(TensorD::zeros({1, 1, 2000}), big).item(), 0.9995, 1e-12);
  EXPECT_THROW(dice_loss(TensorD::zeros({1, 1, 2}), Mask(1, 2), exact), NumericalError);
}

TEST(DiceLoss, SymmetricInPredictionAndMask) {
  const auto a = mask_of(2, 3, {1, 0, 1, 1, 0, 0});
  const auto b = mask_of(2, 3, {0, 0, 1, 1, 1, 0});
  auto as_map = [](const Mask& m) {
    return map_of(m.height, m.width, std::vector<double>(m.data.begin(), m.data.end()));
  };
  EXPECT_EQ(dice_loss(as_map(a), b).item(), dice_loss(as_map(b), a).item());
}

TEST(TotalLoss, ReportIsExactlyAdditive) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Mask m(3, 3);
    std::vector<double> p(9);
    for (std::size_t i = 0; i < 9; ++i) {
      m.data[i] = uniform01(rng) < 0.4;
      p[i] = uniform01(rng);
    }
    const auto rec = TensorD::scalar(uniform(rng, 0.0, 10.0));
    const auto t = total_loss(rec, map_of(3, 3, p), m);
    const auto& r = t.report;
    ASSERT_EQ(r.l_ref, r.l_focal + r.l_dice);
    ASSERT_EQ(r.l_total, r.l_rec + r.l_ref);
    ASSERT_EQ(t.total.item(), r.l_total);
    ASSERT_EQ(r.l_rec, rec.item());
  }
}

TEST(TotalLoss, FloatReportIsAdditiveToo) {
  const auto rec = Tensor<float>::scalar(1.25f);
  const auto pred = Tensor<float>::from({1, 1, 3}, {0.2f, 0.7f, 0.4f});
  const auto r = total_loss(rec, pred, mask_of(1, 3, {0, 1, 0})).report;
  EXPECT_EQ(r.l_total, r.l_rec + r.l_ref);
  EXPECT_EQ(r.l_ref, r.l_focal + r.l_dice);
}
