#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library's ops; every oracle is a direct
// loop over the defining formula.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "almrr/rng.hpp"
#include "almrr/tensor.hpp"

namespace oracle {

using almrr::Rng;
using almrr::Shape;
using TensorD = almrr::Tensor<double>;

inline std::vector<double> randn(Rng& rng, std::size_t n, double sigma = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = almrr::normal01(rng) * sigma;
  return v;
}

inline TensorD random_tensor(Rng& rng, Shape shape, double sigma = 1.0, bool requires_grad = true) {
  const auto n = almrr::numel(shape);
  return TensorD::from(std::move(shape), randn(rng, n, sigma), requires_grad);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------- gradients

/// Central finite-difference check of d(sum(w * f(inputs)))/d(inputs) with a
/// fixed random weighting w. Returns the norm-wise relative error
/// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-12)
/// with the gradients of all inputs concatenated into one vector.
inline double grad_check(const std::function<TensorD(const std::vector<TensorD>&)>& f, std::vector<TensorD> inputs,
                         std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed);
  const TensorD probe = f(inputs);
  const std::vector<double> w = randn(rng, probe.numel());
  auto objective = [&]() {
    almrr::NoGradGuard ng;
    const TensorD out = f(inputs);
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += w[i] * out[i];
    return s;
  };
  for (auto& t : inputs) t.clear_grad();
  {
    const TensorD out = f(inputs);
    // Weighted sum through a single hand-written node.
    const TensorD loss = almrr::make_result<double>(
        {1},
        {[&] {
          double s = 0.0;
          for (std::size_t i = 0; i < out.numel(); ++i) s += w[i] * out[i];
          return s;
        }()},
        {out}, [out, w](const std::vector<double>& g) {
          double* go = almrr::grad_of(out);
          for (std::size_t i = 0; i < w.size(); ++i) go[i] += g[0] * w[i];
        });
    loss.backward();
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.numel());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double x0 = data[i];
      data[i] = x0 + h;
      const double fp = objective();
      data[i] = x0 - h;
      const double fm = objective();
      data[i] = x0;
      numeric[i] = (fp - fm) / (2.0 * h);
    }
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

// ---------------------------------------------------------------- convolution

/// out[o][y][x] = b[o] + sum_{c,i,j} k[o][c][i][j] * in[c][y*s - p + i][x*s - p + j]
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t c_in, std::size_t h, std::size_t w,
                                  const std::vector<double>& k, std::size_t c_out, std::size_t ks,
                                  const std::vector<double>& bias, int s, int p, std::size_t* oh_out,
                                  std::size_t* ow_out) {
  const std::size_t oh = (h + 2 * p - ks) / s + 1, ow = (w + 2 * p - ks) / s + 1;
  std::vector<double> out(c_out * oh * ow, 0.0);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t i = 0; i < ks; ++i)
            for (std::size_t j = 0; j < ks; ++j) {
              const long yy = static_cast<long>(y * s + i) - p, xx = static_cast<long>(x * s + j) - p;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              acc += k[((o * c_in + c) * ks + i) * ks + j] * in[(c * h + yy) * w + xx];
            }
        out[(o * oh + y) * ow + x] = acc;
      }
  *oh_out = oh;
  *ow_out = ow;
  return out;
}

/// Scatter form: every input pixel spreads k[c][o] into the output window.
inline std::vector<double> conv_transpose2d(const std::vector<double>& in, std::size_t c_in, std::size_t h,
                                            std::size_t w, const std::vector<double>& k, std::size_t c_out,
                                            std::size_t ks, const std::vector<double>& bias, int s, int p) {
  const std::size_t oh = (h - 1) * s + ks - 2 * p, ow = (w - 1) * s + ks - 2 * p;
  std::vector<double> out(c_out * oh * ow, 0.0);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t i = 0; i < oh * ow; ++i) out[o * oh * ow + i] = bias.empty() ? 0.0 : bias[o];
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t o = 0; o < c_out; ++o)
          for (std::size_t i = 0; i < ks; ++i)
            for (std::size_t j = 0; j < ks; ++j) {
              const long yy = static_cast<long>(y * s + i) - p, xx = static_cast<long>(x * s + j) - p;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(oh) || xx >= static_cast<long>(ow)) continue;
              out[(o * oh + yy) * ow + xx] += in[(c * h + y) * w + x] * k[((c * c_out + o) * ks + i) * ks + j];
            }
  return out;
}

// ---------------------------------------------------------------- scan

/// Per-step recurrence with an explicit state vector per channel.
inline std::vector<double> naive_scan(const std::vector<double>& x, const std::vector<double>& delta,
                                      const std::vector<double>& a_log, const std::vector<double>& b,
                                      const std::vector<double>& c, const std::vector<double>& d_skip,
                                      std::size_t len, std::size_t di, std::size_t n, bool reverse) {
  std::vector<double> y(len * di, 0.0);
  for (std::size_t d = 0; d < di; ++d) {
    std::vector<double> h(n, 0.0);
    for (std::size_t step = 0; step < len; ++step) {
      const std::size_t t = reverse ? len - 1 - step : step;
      double out = d_skip[d] * x[t * di + d];
      for (std::size_t k = 0; k < n; ++k) {
        const double a = -std::exp(a_log[d * n + k]);
        h[k] = std::exp(delta[t * di + d] * a) * h[k] + delta[t * di + d] * b[t * n + k] * x[t * di + d];
        out += c[t * n + k] * h[k];
      }
      y[t * di + d] = out;
    }
  }
  return y;
}

// ---------------------------------------------------------------- metrics

/// O(n^2) pairwise AUROC.
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
  long double wins = 0;
  std::uint64_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j]) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5L;
    }
  }
  return static_cast<double>(wins / pairs);
}

/// Recomputes precision and recall from scratch at every distinct threshold.
inline double sweep_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
  std::vector<double> thr = s;
  std::sort(thr.begin(), thr.end(), std::greater<>());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  std::uint64_t total_pos = 0;
  for (auto v : l) total_pos += v;
  long double ap = 0, prev_recall = 0;
  for (double t : thr) {
    std::uint64_t tp = 0, pred = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) {
        ++pred;
        tp += l[i];
      }
    const long double recall = static_cast<long double>(tp) / total_pos;
    const long double precision = static_cast<long double>(tp) / pred;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return static_cast<double>(ap);
}

// ---------------------------------------------------------------- misc

inline std::filesystem::path temp_dir(const std::string& name) {
  const char* base = std::getenv("ALMRR_TEST_TMP");
  std::filesystem::path p = base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "almrr_tests";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
