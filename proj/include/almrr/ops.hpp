#pragma once

#include <vector>

#include "almrr/tensor.hpp"

// Differentiable primitives. All image-like tensors are single samples laid
// out C x H x W; token sequences are T x D. There is no implicit broadcasting
// beyond tensor-with-scalar.
namespace almrr::ops {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> silu(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> softplus(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// 2-D transpose.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
/// Reverses the order of rows of a 2-D tensor.
template <typename T> Tensor<T> reverse_rows(const Tensor<T>& a);
/// Columns [begin, end) of a 2-D tensor.
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
/// Concatenation along axis 0 (channels for C x H x W tensors).
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);

/// x: N x Din, weight: Dout x Din, bias: Dout (optional) -> N x Dout.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {});
/// a: M x K, b: K x N -> M x N.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// Row-wise softmax of a 2-D tensor.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& a);

/// input: Cin x H x W, kernel: Cout x Cin x k x k, bias: Cout (optional).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias = {},
                 int stride = 1, int padding = 0);
/// input: Cin x H x W, kernel: Cin x Cout x k x k (the conv2d kernel of the
/// adjoint convolution), bias: Cout (optional). H' = (H-1)*stride + k - 2*padding.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias = {}, int stride = 1, int padding = 0);
/// seq: T x D, kernel: D x w, bias: D (optional). Tap j of channel d multiplies
/// seq[t - (w - 1) + j][d]; positions before the start read zero.
template <typename T>
Tensor<T> conv1d_causal_depthwise(const Tensor<T>& seq, const Tensor<T>& kernel,
                                  const Tensor<T>& bias = {});
/// 2x2 max pooling with stride 2 on C x H x W (H, W even).
template <typename T> Tensor<T> maxpool2x2(const Tensor<T>& input);

enum class NormKind { layer, instance };

inline constexpr double kNormEpsilon = 1e-5;

/// layer: T x D normalized over D. instance: C x H x W normalized per channel
/// over H x W. gain/bias are optional, sized D (layer) or C (instance).
template <typename T>
Tensor<T> normalize(const Tensor<T>& input, NormKind kind, const Tensor<T>& gain = {},
                    const Tensor<T>& bias = {}, double eps = kNormEpsilon);

/// Half-pixel-centre bilinear resize (align_corners = false) of C x H x W.
template <typename T> Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

/// Mean over channels: C x H x W -> 1 x H x W.
template <typename T> Tensor<T> channel_mean(const Tensor<T>& input);
/// Euclidean norm over channels: C x H x W -> 1 x H x W. Subgradient 0 where the norm is 0.
template <typename T> Tensor<T> channel_l2(const Tensor<T>& input);

}  // namespace almrr::ops
