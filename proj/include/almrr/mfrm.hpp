#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "almrr/embed.hpp"
#include "almrr/param_store.hpp"

namespace almrr {

/// Token-mixing architecture inside the reconstruction module.
enum class ReconArch { mamba, conv1, conv3, attention };

ReconArch parse_recon_arch(const std::string& s);
const char* to_string(ReconArch arch);

struct MfrmConfig {
  int embed_dim = 192;         // D
  int depth = 8;               // L
  int patch_size = 4;
  int reduced_channels = 192;  // C1
  int state_dim = 16;          // N
  int conv_width = 4;          // w
  int expand_factor = 2;
  /// Rank of the delta projection; 0 selects ceil(D / 16).
  int dt_rank = 0;
  ReconArch arch = ReconArch::mamba;

  int inner_dim() const { return expand_factor * embed_dim; }
  int resolved_dt_rank() const { return dt_rank > 0 ? dt_rank : (embed_dim + 15) / 16; }
  void validate(std::size_t grid_size) const;
};

/// T x D token sequence with its position in the block stack.
template <typename T>
struct TokenSequence {
  Tensor<T> tokens;
  int layer_index = 0;
};

enum class ScanDirection { forward, backward };

/// Selective state-space scan, linear in T.
///
///   A  = -exp(a_log)                      (D_inner x N)
///   h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * x_t,   h_0 = 0
///   y_t = C_t . h_t + d_skip * x_t
///
/// x, delta: T x D_inner; b, c: T x N; d_skip: D_inner. The backward direction
/// scans the reversed sequence and reverses the result.
template <typename T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a_log, const Tensor<T>& b,
                         const Tensor<T>& c, const Tensor<T>& d_skip, ScanDirection direction = ScanDirection::forward);

/// Parameters of one scan direction: causal depthwise conv, input-dependent
/// (delta, B, C) projections, state matrix and skip term.
template <typename T>
struct SsmParams {
  Tensor<T> conv_weight;  // D_inner x w
  Tensor<T> conv_bias;    // D_inner
  Tensor<T> x_proj;       // (R + 2N) x D_inner
  Tensor<T> dt_weight;    // D_inner x R
  Tensor<T> dt_bias;      // D_inner
  Tensor<T> a_log;        // D_inner x N
  Tensor<T> d_skip;       // D_inner

  /// conv -> SiLU -> selective scan along the given sequence order.
  Tensor<T> apply(const Tensor<T>& x, int state_dim, int dt_rank) const;
};

/// Bidirectional Mamba block:
///   n = Norm(T_l); x = Wx n; z = Wz n
///   y_f = SSM_f(Conv_f(x)), y_b = reverse(SSM_b(Conv_b(reverse(x))))
///   T_{l+1} = W_out (y_f * SiLU(z) + y_b * SiLU(z)) + T_l
template <typename T>
class MambaBlock {
 public:
  MambaBlock(const MfrmConfig& cfg, const std::string& prefix, ParamStore<T>& store, std::uint64_t seed);
  TokenSequence<T> forward(const TokenSequence<T>& in) const;

  Tensor<T> norm_gain, norm_bias;
  Tensor<T> in_x, in_z;  // D_inner x D
  SsmParams<T> fwd, bwd;
  Tensor<T> out_proj;  // D x D_inner

 private:
  int state_dim_, dt_rank_;
};

/// Residual token-mixing block of one of the alternative architectures.
template <typename T>
class MixerBlock {
 public:
  MixerBlock(const MfrmConfig& cfg, std::size_t grid_h, std::size_t grid_w, const std::string& prefix,
             ParamStore<T>& store, std::uint64_t seed);
  TokenSequence<T> forward(const TokenSequence<T>& in) const;

 private:
  ReconArch arch_;
  std::size_t gh_, gw_;
  std::unique_ptr<MambaBlock<T>> mamba_;
  Tensor<T> norm_gain_, norm_bias_;
  Tensor<T> w1_, b1_, w2_, b2_;  // MLP or convolution weights
  Tensor<T> wq_, wk_, wv_, wo_;  // attention
  Tensor<T> norm2_gain_, norm2_bias_;
};

/// Feature reconstruction: 1x1 reduce -> patch embed + position -> L blocks
/// -> reshape -> 3 transposed convs (instance norm + ReLU between, tanh last)
/// -> 1x1 expand.
template <typename T>
class Mfrm {
 public:
  Mfrm(const MfrmConfig& cfg, std::size_t channels, std::size_t grid_size, ParamStore<T>& store,
       std::uint64_t seed);

  Tensor<T> reduce(const Tensor<T>& f) const;
  Tensor<T> expand(const Tensor<T>& f) const;
  TokenSequence<T> patch_embed(const Tensor<T>& f) const;
  /// T x D tokens -> D x (H0/p) x (W0/p).
  Tensor<T> unpatch(const TokenSequence<T>& tokens) const;
  Tensor<T> decode(const Tensor<T>& latent) const;
  FeatureStack<T> forward(const FeatureStack<T>& f) const;

  const MfrmConfig& config() const { return cfg_; }
  const std::vector<MixerBlock<T>>& blocks() const { return blocks_; }
  std::size_t tokens() const { return (grid_ / cfg_.patch_size) * (grid_ / cfg_.patch_size); }

 private:
  MfrmConfig cfg_;
  std::size_t channels_, grid_;
  Tensor<T> reduce_w_, reduce_b_, expand_w_, expand_b_;
  Tensor<T> patch_w_, patch_b_, pos_;
  std::vector<MixerBlock<T>> blocks_;
  std::vector<Tensor<T>> dec_w_, dec_b_;
  std::vector<int> dec_stride_;
};

}  // namespace almrr
