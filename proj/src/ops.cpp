#include "almrr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace almrr::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
ConstMatMap<T> cmat(const T* p, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
MatMap<T> mmat(T* p, std::size_t rows, std::size_t cols) {
  return MatMap<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool ok, const std::string& op, const std::string& detail) {
  if (!ok) throw ShapeError(op + ": " + detail);
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const std::string& op, const char* name) {
  require(t.defined(), op, std::string(name) + " is undefined");
  require(t.ndim() == rank, op,
          std::string(name) + " must have rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const std::string& op) {
  require(a.shape() == b.shape(), op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, F f, D deriv) {
  const auto& x = a.vec();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [a, deriv](const std::vector<T>& g) {
    T* ga = grad_of(a);
    const auto& x = a.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i]);
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Column matrix of a C x H x W image for a k x k window with stride s and
// zero padding p: row (c, ki, kj), column (oy, ox).
template <typename T>
void im2col(const T* x, int c_in, int h, int w, int k, int s, int p, int ho, int wo, T* cols) {
  for (int c = 0; c < c_in; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + static_cast<std::size_t>((c * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ki;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename T>
void col2im(const T* cols, int c_in, int h, int w, int k, int s, int p, int ho, int wo, T* x) {
  for (int c = 0; c < c_in; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + static_cast<std::size_t>((c * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = x + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<T>& g) {
    if (T* ga = grad_of(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = grad_of(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<T>& g) {
    if (T* ga = grad_of(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = grad_of(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<T>& g) {
    if (T* ga = grad_of(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
    if (T* gb = grad_of(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T) { return T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return x * sigmoid_scalar(x); },
      [](T x) {
        const T s = sigmoid_scalar(x);
        return s * (T(1) + x * (T(1) - s));
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return std::tanh(x); },
      [](T x) {
        const T t = std::tanh(x);
        return T(1) - t * t;
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return sigmoid_scalar(x); },
      [](T x) {
        const T s = sigmoid_scalar(x);
        return s * (T(1) - s);
      });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return x > T(20) ? x : std::log1p(std::exp(x)); },
      [](T x) { return sigmoid_scalar(x); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x) { return T(2) * x; });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (auto v : a.data()) s += v;
  return make_result<T>({1}, {s}, {a}, [a](const std::vector<T>& g) {
    T* ga = grad_of(a);
    for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T s = T(0);
  for (auto v : a.data()) s += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_result<T>({1}, {s * inv}, {a}, [a, inv](const std::vector<T>& g) {
    T* ga = grad_of(a);
    for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[0] * inv;
  });
}

// ---------------------------------------------------------------- layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require(numel(shape) == a.numel(), "reshape",
          "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  return make_result<T>(std::move(shape), a.vec(), {a}, [a](const std::vector<T>& g) {
    T* ga = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose", "input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return make_result<T>({c, r}, std::move(out), {a}, [a, r, c](const std::vector<T>& g) {
    T* ga = grad_of(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

template <typename T>
Tensor<T> reverse_rows(const Tensor<T>& a) {
  require_rank(a, 2, "reverse_rows", "input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(a.data().begin() + (r - 1 - i) * c, c, out.begin() + i * c);
  return make_result<T>(a.shape(), std::move(out), {a}, [a, r, c](const std::vector<T>& g) {
    T* ga = grad_of(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[(r - 1 - i) * c + j] += g[i * c + j];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols", "input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  require(begin < end && end <= c, "slice_cols",
          "range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " + std::to_string(c) + " columns");
  const std::size_t w = end - begin;
  std::vector<T> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * c + begin + j];
  return make_result<T>({r, w}, std::move(out), {a}, [a, r, c, w, begin](const std::vector<T>& g) {
    T* ga = grad_of(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat", "no inputs");
  Shape shape = parts[0].shape();
  require(!shape.empty(), "concat", "rank-0 input");
  std::size_t lead = 0;
  for (const auto& p : parts) {
    require(p.ndim() == shape.size() && std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1),
            "concat", "trailing dims differ: " + shape_str(p.shape()) + " vs " + shape_str(shape));
    lead += p.dim(0);
  }
  shape[0] = lead;
  std::vector<T> out;
  out.reserve(numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>(std::move(shape), std::move(out), parts, [parts](const std::vector<T>& g) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (T* gp = grad_of(p))
        for (std::size_t i = 0; i < p.numel(); ++i) gp[i] += g[off + i];
      off += p.numel();
    }
  });
}

// ---------------------------------------------------------------- dense algebra

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "linear", "x");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  require(weight.dim(1) == din, "linear",
          "weight " + shape_str(weight.shape()) + " incompatible with input width " + std::to_string(din));
  if (bias.defined()) require(bias.numel() == dout, "linear", "bias length must be " + std::to_string(dout));
  std::vector<T> out(n * dout);
  auto o = mmat(out.data(), n, dout);
  o.noalias() = cmat(x.data().data(), n, din) * cmat(weight.data().data(), dout, din).transpose();
  if (bias.defined())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dout; ++j) out[i * dout + j] += bias[j];
  return make_result<T>({n, dout}, std::move(out), {x, weight, bias},
                        [x, weight, bias, n, din, dout](const std::vector<T>& g) {
                          auto gm = cmat(g.data(), n, dout);
                          if (T* gx = grad_of(x))
                            mmat(gx, n, din).noalias() += gm * cmat(weight.data().data(), dout, din);
                          if (T* gw = grad_of(weight))
                            mmat(gw, dout, din).noalias() += gm.transpose() * cmat(x.data().data(), n, din);
                          if (T* gb = grad_of(bias))
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < dout; ++j) gb[j] += g[i * dout + j];
                        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul", "inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<T> out(m * n);
  mmat(out.data(), m, n).noalias() = cmat(a.data().data(), m, k) * cmat(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const std::vector<T>& g) {
    auto gm = cmat(g.data(), m, n);
    if (T* ga = grad_of(a)) mmat(ga, m, k).noalias() += gm * cmat(b.data().data(), k, n).transpose();
    if (T* gb = grad_of(b)) mmat(gb, k, n).noalias() += cmat(a.data().data(), m, k).transpose() * gm;
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  require_rank(a, 2, "softmax_rows", "input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto y = std::make_shared<std::vector<T>>(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const T* x = a.data().data() + i * c;
    T* out = y->data() + i * c;
    const T mx = *std::max_element(x, x + c);
    T s = T(0);
    for (std::size_t j = 0; j < c; ++j) s += (out[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[j] /= s;
  }
  return make_result<T>(a.shape(), *y, {a}, [a, y, r, c](const std::vector<T>& g) {
    T* ga = grad_of(a);
    for (std::size_t i = 0; i < r; ++i) {
      const T* yi = y->data() + i * c;
      const T* gi = g.data() + i * c;
      T dot = T(0);
      for (std::size_t j = 0; j < c; ++j) dot += gi[j] * yi[j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += yi[j] * (gi[j] - dot);
    }
  });
}

// ---------------------------------------------------------------- convolutions

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int padding) {
  require_rank(input, 3, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  const int c_in = static_cast<int>(input.dim(0)), h = static_cast<int>(input.dim(1)),
            w = static_cast<int>(input.dim(2));
  const int c_out = static_cast<int>(kernel.dim(0)), k = static_cast<int>(kernel.dim(2));
  require(static_cast<int>(kernel.dim(1)) == c_in, "conv2d",
          "kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input has " + std::to_string(c_in));
  require(kernel.dim(3) == kernel.dim(2) && k >= 1, "conv2d", "kernel must be square, got " + shape_str(kernel.shape()));
  require(stride >= 1 && padding >= 0, "conv2d", "stride must be >= 1 and padding >= 0");
  require(h + 2 * padding >= k && w + 2 * padding >= k, "conv2d",
          "kernel " + std::to_string(k) + " larger than padded input " + shape_str(input.shape()));
  if (bias.defined()) require(static_cast<int>(bias.numel()) == c_out, "conv2d", "bias length must equal Cout");
  const int ho = (h + 2 * padding - k) / stride + 1, wo = (w + 2 * padding - k) / stride + 1;
  const std::size_t ckk = static_cast<std::size_t>(c_in) * k * k, hw = static_cast<std::size_t>(ho) * wo;
  const bool pointwise = (k == 1 && stride == 1 && padding == 0);

  std::shared_ptr<std::vector<T>> cols;
  const T* col_ptr = input.data().data();
  if (!pointwise) {
    cols = std::make_shared<std::vector<T>>(ckk * hw);
    im2col(input.data().data(), c_in, h, w, k, stride, padding, ho, wo, cols->data());
    col_ptr = cols->data();
  }
  std::vector<T> out(static_cast<std::size_t>(c_out) * hw);
  mmat(out.data(), c_out, hw).noalias() = cmat(kernel.data().data(), c_out, ckk) * cmat(col_ptr, ckk, hw);
  if (bias.defined())
    for (int o = 0; o < c_out; ++o)
      for (std::size_t i = 0; i < hw; ++i) out[o * hw + i] += bias[o];

  const bool need_cols = kernel.requires_grad();
  if (!need_cols) cols.reset();
  return make_result<T>(
      {static_cast<std::size_t>(c_out), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)}, std::move(out),
      {input, kernel, bias},
      [=](const std::vector<T>& g) {
        auto gm = cmat(g.data(), c_out, hw);
        if (T* gk = grad_of(kernel)) {
          const T* cp = pointwise ? input.data().data() : cols->data();
          mmat(gk, c_out, ckk).noalias() += gm * cmat(cp, ckk, hw).transpose();
        }
        if (T* gb = grad_of(bias))
          for (int o = 0; o < c_out; ++o)
            for (std::size_t i = 0; i < hw; ++i) gb[o] += g[o * hw + i];
        if (T* gx = grad_of(input)) {
          if (pointwise) {
            mmat(gx, ckk, hw).noalias() += cmat(kernel.data().data(), c_out, ckk).transpose() * gm;
          } else {
            std::vector<T> gcols(ckk * hw);
            mmat(gcols.data(), ckk, hw).noalias() = cmat(kernel.data().data(), c_out, ckk).transpose() * gm;
            col2im(gcols.data(), c_in, h, w, k, stride, padding, ho, wo, gx);
          }
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                           int padding) {
  require_rank(input, 3, "conv_transpose2d", "input");
  require_rank(kernel, 4, "conv_transpose2d", "kernel");
  const int c_in = static_cast<int>(input.dim(0)), h = static_cast<int>(input.dim(1)),
            w = static_cast<int>(input.dim(2));
  const int c_out = static_cast<int>(kernel.dim(1)), k = static_cast<int>(kernel.dim(2));
  require(static_cast<int>(kernel.dim(0)) == c_in, "conv_transpose2d",
          "kernel expects " + std::to_string(kernel.dim(0)) + " input channels, input has " + std::to_string(c_in));
  require(kernel.dim(3) == kernel.dim(2) && k >= 1, "conv_transpose2d",
          "kernel must be square, got " + shape_str(kernel.shape()));
  require(stride >= 1 && padding >= 0, "conv_transpose2d", "stride must be >= 1 and padding >= 0");
  const int ho = (h - 1) * stride + k - 2 * padding, wo = (w - 1) * stride + k - 2 * padding;
  require(ho >= 1 && wo >= 1, "conv_transpose2d", "padding too large for input " + shape_str(input.shape()));
  if (bias.defined()) require(static_cast<int>(bias.numel()) == c_out, "conv_transpose2d", "bias length must equal Cout");
  const std::size_t ckk = static_cast<std::size_t>(c_out) * k * k, hw = static_cast<std::size_t>(h) * w,
                    ohw = static_cast<std::size_t>(ho) * wo;

  std::vector<T> cols(ckk * hw);
  mmat(cols.data(), ckk, hw).noalias() =
      cmat(kernel.data().data(), c_in, ckk).transpose() * cmat(input.data().data(), c_in, hw);
  std::vector<T> out(static_cast<std::size_t>(c_out) * ohw, T(0));
  col2im(cols.data(), c_out, ho, wo, k, stride, padding, h, w, out.data());
  if (bias.defined())
    for (int o = 0; o < c_out; ++o)
      for (std::size_t i = 0; i < ohw; ++i) out[o * ohw + i] += bias[o];

  return make_result<T>(
      {static_cast<std::size_t>(c_out), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)}, std::move(out),
      {input, kernel, bias},
      [=](const std::vector<T>& g) {
        if (T* gb = grad_of(bias))
          for (int o = 0; o < c_out; ++o)
            for (std::size_t i = 0; i < ohw; ++i) gb[o] += g[o * ohw + i];
        T* gx = grad_of(input);
        T* gk = grad_of(kernel);
        if (!gx && !gk) return;
        std::vector<T> gcols(ckk * hw);
        im2col(g.data(), c_out, ho, wo, k, stride, padding, h, w, gcols.data());
        auto gc = cmat(gcols.data(), ckk, hw);
        if (gx) mmat(gx, c_in, hw).noalias() += cmat(kernel.data().data(), c_in, ckk) * gc;
        if (gk) mmat(gk, c_in, ckk).noalias() += cmat(input.data().data(), c_in, hw) * gc.transpose();
      });
}

template <typename T>
Tensor<T> conv1d_causal_depthwise(const Tensor<T>& seq, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_rank(seq, 2, "conv1d_causal_depthwise", "seq");
  require_rank(kernel, 2, "conv1d_causal_depthwise", "kernel");
  const std::size_t len = seq.dim(0), d = seq.dim(1), w = kernel.dim(1);
  require(kernel.dim(0) == d, "conv1d_causal_depthwise",
          "kernel has " + std::to_string(kernel.dim(0)) + " channels, sequence has " + std::to_string(d));
  require(w >= 1, "conv1d_causal_depthwise", "kernel width must be >= 1");
  if (bias.defined()) require(bias.numel() == d, "conv1d_causal_depthwise", "bias length must equal D");
  std::vector<T> out(len * d);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < d; ++c) {
      T acc = bias.defined() ? bias[c] : T(0);
      for (std::size_t j = 0; j < w; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(w - 1);
        if (src >= 0) acc += kernel[c * w + j] * seq[static_cast<std::size_t>(src) * d + c];
      }
      out[t * d + c] = acc;
    }
  return make_result<T>(seq.shape(), std::move(out), {seq, kernel, bias},
                        [seq, kernel, bias, len, d, w](const std::vector<T>& g) {
                          T* gx = grad_of(seq);
                          T* gk = grad_of(kernel);
                          T* gb = grad_of(bias);
                          for (std::size_t t = 0; t < len; ++t)
                            for (std::size_t c = 0; c < d; ++c) {
                              const T go = g[t * d + c];
                              if (gb) gb[c] += go;
                              for (std::size_t j = 0; j < w; ++j) {
                                const std::ptrdiff_t src =
                                    static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(w - 1);
                                if (src < 0) continue;
                                const std::size_t si = static_cast<std::size_t>(src) * d + c;
                                if (gx) gx[si] += go * kernel[c * w + j];
                                if (gk) gk[c * w + j] += go * seq[si];
                              }
                            }
                        });
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input) {
  require_rank(input, 3, "maxpool2x2", "input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2x2", "spatial dims must be even, got " + shape_str(input.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<T> out(c * ho * wo);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        std::size_t best = (ch * h + 2 * y) * w + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
            if (input[idx] > input[best]) best = idx;
          }
        const std::size_t o = (ch * ho + y) * wo + x;
        out[o] = input[best];
        (*arg)[o] = best;
      }
  return make_result<T>({c, ho, wo}, std::move(out), {input}, [input, arg](const std::vector<T>& g) {
    T* gx = grad_of(input);
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*arg)[i]] += g[i];
  });
}

// ---------------------------------------------------------------- normalization

template <typename T>
Tensor<T> normalize(const Tensor<T>& input, NormKind kind, const Tensor<T>& gain, const Tensor<T>& bias,
                    double eps) {
  std::size_t groups, size;
  if (kind == NormKind::layer) {
    require_rank(input, 2, "normalize(layer)", "input");
    groups = input.dim(0);
    size = input.dim(1);
  } else {
    require_rank(input, 3, "normalize(instance)", "input");
    groups = input.dim(0);
    size = input.dim(1) * input.dim(2);
  }
  require(size >= 1, "normalize", "normalized axis is empty");
  require(eps > 0.0, "normalize", "epsilon must be positive");
  // Affine parameters are indexed by feature (layer) or by channel (instance).
  const std::size_t affine_len = kind == NormKind::layer ? size : groups;
  if (gain.defined()) require(gain.numel() == affine_len, "normalize", "gain length must be " + std::to_string(affine_len));
  if (bias.defined()) require(bias.numel() == affine_len, "normalize", "bias length must be " + std::to_string(affine_len));
  const bool per_feature = kind == NormKind::layer;

  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto inv_std = std::make_shared<std::vector<T>>(groups);
  std::vector<T> out(input.numel());
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const T* x = input.data().data() + gi * size;
    T m = T(0);
    for (std::size_t i = 0; i < size; ++i) m += x[i];
    m /= static_cast<T>(size);
    T v = T(0);
    for (std::size_t i = 0; i < size; ++i) v += (x[i] - m) * (x[i] - m);
    v /= static_cast<T>(size);
    const T is = T(1) / std::sqrt(v + static_cast<T>(eps));
    (*inv_std)[gi] = is;
    for (std::size_t i = 0; i < size; ++i) {
      const T xh = (x[i] - m) * is;
      (*xhat)[gi * size + i] = xh;
      const std::size_t a = per_feature ? i : gi;
      out[gi * size + i] = xh * (gain.defined() ? gain[a] : T(1)) + (bias.defined() ? bias[a] : T(0));
    }
  }
  return make_result<T>(input.shape(), std::move(out), {input, gain, bias},
                        [=](const std::vector<T>& g) {
                          T* gx = grad_of(input);
                          T* gg = grad_of(gain);
                          T* gb = grad_of(bias);
                          std::vector<T> gxh(size);
                          for (std::size_t gi = 0; gi < groups; ++gi) {
                            const T* xh = xhat->data() + gi * size;
                            const T* go = g.data() + gi * size;
                            T s1 = T(0), s2 = T(0);
                            for (std::size_t i = 0; i < size; ++i) {
                              const std::size_t a = per_feature ? i : gi;
                              if (gg) gg[a] += go[i] * xh[i];
                              if (gb) gb[a] += go[i];
                              gxh[i] = go[i] * (gain.defined() ? gain[a] : T(1));
                              s1 += gxh[i];
                              s2 += gxh[i] * xh[i];
                            }
                            if (!gx) continue;
                            const T inv_n = T(1) / static_cast<T>(size);
                            const T is = (*inv_std)[gi];
                            for (std::size_t i = 0; i < size; ++i)
                              gx[gi * size + i] += is * (gxh[i] - s1 * inv_n - xh[i] * s2 * inv_n);
                          }
                        });
}

// ---------------------------------------------------------------- resampling

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 3, "bilinear_resize", "input");
  require(out_h >= 1 && out_w >= 1, "bilinear_resize", "output size must be >= 1");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  struct Tap {
    std::size_t i0, i1;
    T frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> v(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
      if (src < 0.0) src = 0.0;
      std::size_t i0 = static_cast<std::size_t>(src);
      if (i0 > in - 1) i0 = in - 1;
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      v[o] = {i0, i1, static_cast<T>(src - static_cast<double>(i0))};
    }
    return v;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(h, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(w, out_w));
  std::vector<T> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = input.data().data() + ch * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap& a = (*ty)[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap& b = (*tx)[x];
        const T v00 = src[a.i0 * w + b.i0], v01 = src[a.i0 * w + b.i1];
        const T v10 = src[a.i1 * w + b.i0], v11 = src[a.i1 * w + b.i1];
        // Difference form keeps constant fields exact.
        const T top = v00 + b.frac * (v01 - v00);
        const T bot = v10 + b.frac * (v11 - v10);
        out[(ch * out_h + y) * out_w + x] = top + a.frac * (bot - top);
      }
    }
  }
  return make_result<T>({c, out_h, out_w}, std::move(out), {input},
                        [input, ty, tx, c, h, w, out_h, out_w](const std::vector<T>& g) {
                          T* gx = grad_of(input);
                          for (std::size_t ch = 0; ch < c; ++ch) {
                            T* dst = gx + ch * h * w;
                            for (std::size_t y = 0; y < out_h; ++y) {
                              const Tap& a = (*ty)[y];
                              for (std::size_t x = 0; x < out_w; ++x) {
                                const Tap& b = (*tx)[x];
                                const T go = g[(ch * out_h + y) * out_w + x];
                                dst[a.i0 * w + b.i0] += go * (T(1) - a.frac) * (T(1) - b.frac);
                                dst[a.i0 * w + b.i1] += go * (T(1) - a.frac) * b.frac;
                                dst[a.i1 * w + b.i0] += go * a.frac * (T(1) - b.frac);
                                dst[a.i1 * w + b.i1] += go * a.frac * b.frac;
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> channel_mean(const Tensor<T>& input) {
  require_rank(input, 3, "channel_mean", "input");
  const std::size_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  require(c >= 1, "channel_mean", "no channels");
  std::vector<T> out(hw, T(0));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[i] += input[ch * hw + i];
  const T inv = T(1) / static_cast<T>(c);
  for (auto& v : out) v *= inv;
  return make_result<T>({1, input.dim(1), input.dim(2)}, std::move(out), {input},
                        [input, c, hw, inv](const std::vector<T>& g) {
                          T* gx = grad_of(input);
                          for (std::size_t ch = 0; ch < c; ++ch)
                            for (std::size_t i = 0; i < hw; ++i) gx[ch * hw + i] += g[i] * inv;
                        });
}

template <typename T>
Tensor<T> channel_l2(const Tensor<T>& input) {
  require_rank(input, 3, "channel_l2", "input");
  const std::size_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  std::vector<T> out(hw, T(0));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[i] += input[ch * hw + i] * input[ch * hw + i];
  for (auto& v : out) v = std::sqrt(v);
  auto norms = std::make_shared<std::vector<T>>(out);
  return make_result<T>({1, input.dim(1), input.dim(2)}, std::move(out), {input},
                        [input, norms, c, hw](const std::vector<T>& g) {
                          T* gx = grad_of(input);
                          for (std::size_t i = 0; i < hw; ++i) {
                            const T n = (*norms)[i];
                            if (n == T(0)) continue;
                            const T f = g[i] / n;
                            for (std::size_t ch = 0; ch < c; ++ch) gx[ch * hw + i] += f * input[ch * hw + i];
                          }
                        });
}

#define ALMRR_INSTANTIATE_OPS(T)                                                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                                 \
  template Tensor<T> silu(const Tensor<T>&);                                                                 \
  template Tensor<T> tanh(const Tensor<T>&);                                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                              \
  template Tensor<T> softplus(const Tensor<T>&);                                                             \
  template Tensor<T> square(const Tensor<T>&);                                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                       \
  template Tensor<T> transpose(const Tensor<T>&);                                                            \
  template Tensor<T> reverse_rows(const Tensor<T>&);                                                         \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);                 \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);       \
  template Tensor<T> conv1d_causal_depthwise(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> maxpool2x2(const Tensor<T>&);                                                           \
  template Tensor<T> normalize(const Tensor<T>&, NormKind, const Tensor<T>&, const Tensor<T>&, double);      \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);                            \
  template Tensor<T> channel_mean(const Tensor<T>&);                                                         \
  template Tensor<T> channel_l2(const Tensor<T>&);

ALMRR_INSTANTIATE_OPS(float)
ALMRR_INSTANTIATE_OPS(double)

}  // namespace almrr::ops
