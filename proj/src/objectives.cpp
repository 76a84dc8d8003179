#include "almrr/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "almrr/ops.hpp"

namespace almrr {

void check_binary_mask(const Mask& gt, std::size_t count, const char* op) {
  if (gt.data.size() != count)
    throw ShapeError(std::string(op) + ": mask has " + std::to_string(gt.data.size()) + " pixels, prediction has " +
                     std::to_string(count));
  for (auto v : gt.data)
    if (v > 1) throw ArgumentError(std::string(op) + ": ground-truth mask is not binary");
}

template <typename T>
Tensor<T> rec_loss(const Tensor<T>& f_hat, const Tensor<T>& phi) {
  if (f_hat.shape() != phi.shape())
    throw ShapeError("rec_loss: shape mismatch " + shape_str(f_hat.shape()) + " vs " + shape_str(phi.shape()));
  return ops::mean(ops::channel_l2(ops::sub(f_hat, phi)));
}

template <typename T>
Tensor<T> rec_loss(const FeatureStack<T>& f_hat, const FeatureStack<T>& phi) {
  return rec_loss(f_hat.data, phi.data);
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& pred, const Mask& gt, const FocalOptions& opt) {
  const std::size_t n = pred.numel();
  check_binary_mask(gt, n, "focal_loss");
  const double lo = opt.eps, hi = 1.0 - opt.eps;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(static_cast<double>(pred[i]), lo, hi);
    const bool pos = gt.data[i] != 0;
    const double p = pos ? q : 1.0 - q;
    const double a = pos ? opt.alpha_pos : 1.0 - opt.alpha_pos;
    total += -a * std::pow(1.0 - p, opt.gamma) * std::log(p);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_result<T>({1}, {static_cast<T>(total * inv_n)}, {pred}, [pred, gt, opt, n, lo, hi, inv_n](const std::vector<T>& g) {
    T* gp = grad_of(pred);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = static_cast<double>(pred[i]);
      if (raw < lo || raw > hi) continue;  // clamped: no gradient
      const bool pos = gt.data[i] != 0;
      const double p = pos ? raw : 1.0 - raw;
      const double a = pos ? opt.alpha_pos : 1.0 - opt.alpha_pos;
      const double om = 1.0 - p;
      // d/dp [-a (1-p)^g log p] = a [g (1-p)^(g-1) log p - (1-p)^g / p]
      double d = -a * std::pow(om, opt.gamma) / p;
      if (opt.gamma != 0.0) d += a * opt.gamma * std::pow(om, opt.gamma - 1.0) * std::log(p);
      gp[i] += static_cast<T>(static_cast<double>(g[0]) * inv_n * (pos ? d : -d));
    }
  });
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Mask& gt, const DiceOptions& opt) {
  const std::size_t n = pred.numel();
  check_binary_mask(gt, n, "dice_loss");
  double inter = 0.0, sp = 0.0, sm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(pred[i]);
    inter += p * gt.data[i];
    sp += p;
    sm += gt.data[i];
  }
  const double num = 2.0 * inter + opt.eps, den = sp + sm + opt.eps;
  if (den == 0.0) throw NumericalError("dice_loss: empty prediction and mask with eps = 0");
  return make_result<T>({1}, {static_cast<T>(1.0 - num / den)}, {pred}, [pred, gt, n, num, den](const std::vector<T>& g) {
    T* gp = grad_of(pred);
    const double inv = 1.0 / (den * den);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = -(2.0 * gt.data[i] * den - num) * inv;
      gp[i] += static_cast<T>(static_cast<double>(g[0]) * d);
    }
  });
}

template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& l_rec, const Tensor<T>& pred, const Mask& gt, const FocalOptions& focal,
                        const DiceOptions& dice) {
  const Tensor<T> lf = focal_loss(pred, gt, focal);
  const Tensor<T> ld = dice_loss(pred, gt, dice);
  const Tensor<T> total = ops::add(l_rec, ops::add(lf, ld));
  return {total, LossReport::from_components(static_cast<double>(l_rec.item()), static_cast<double>(lf.item()),
                                             static_cast<double>(ld.item()))};
}

#define ALMRR_INSTANTIATE_OBJECTIVES(T)                                                                           \
  template Tensor<T> rec_loss(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> rec_loss(const FeatureStack<T>&, const FeatureStack<T>&);                                     \
  template Tensor<T> focal_loss(const Tensor<T>&, const Mask&, const FocalOptions&);                               \
  template Tensor<T> dice_loss(const Tensor<T>&, const Mask&, const DiceOptions&);                                 \
  template TotalLoss<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Mask&, const FocalOptions&,          \
                                   const DiceOptions&);

ALMRR_INSTANTIATE_OBJECTIVES(float)
ALMRR_INSTANTIATE_OBJECTIVES(double)

}  // namespace almrr
