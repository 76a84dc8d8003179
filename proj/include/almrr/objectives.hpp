#pragma once

#include "almrr/embed.hpp"
#include "almrr/image.hpp"

namespace almrr {

/// Per-step loss breakdown. l_ref = l_focal + l_dice and
/// l_total = l_rec + l_ref hold exactly.
struct LossReport {
  double l_rec = 0.0;
  double l_focal = 0.0;
  double l_dice = 0.0;
  double l_ref = 0.0;
  double l_total = 0.0;

  static LossReport from_components(double rec, double focal, double dice) {
    LossReport r{rec, focal, dice, 0.0, 0.0};
    r.l_ref = r.l_focal + r.l_dice;
    r.l_total = r.l_rec + r.l_ref;
    return r;
  }
};

struct FocalOptions {
  double alpha_pos = 0.75;
  double gamma = 2.0;
  double eps = 1e-7;  // probability clamp before the log
};

struct DiceOptions {
  double eps = 1.0;
};

/// Mean over grid positions of the channel-vector distance ||phi - f_hat||_2.
template <typename T>
Tensor<T> rec_loss(const Tensor<T>& f_hat, const Tensor<T>& phi);
template <typename T>
Tensor<T> rec_loss(const FeatureStack<T>& f_hat, const FeatureStack<T>& phi);

/// Mean over pixels of -alpha_i (1 - p_i)^gamma log(p_i), p_i the clamped
/// probability of the pixel's true class. `pred` holds H*W probabilities.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& pred, const Mask& gt, const FocalOptions& opt = {});

/// 1 - (2 sum(p m) + eps) / (sum(p) + sum(m) + eps) on probabilities.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Mask& gt, const DiceOptions& opt = {});

template <typename T>
struct TotalLoss {
  Tensor<T> total;  // differentiable l_rec + (l_focal + l_dice)
  LossReport report;
};

/// Sums the reconstruction and refinement objectives.
template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& l_rec, const Tensor<T>& pred, const Mask& gt, const FocalOptions& focal = {},
                        const DiceOptions& dice = {});

/// Validates that the mask holds only 0/1 values and matches `count` pixels.
void check_binary_mask(const Mask& gt, std::size_t count, const char* op);

}  // namespace almrr
