#include "almrr/mfrm.hpp"

#include <cmath>

#include "almrr/init.hpp"
#include "almrr/ops.hpp"

namespace almrr {

ReconArch parse_recon_arch(const std::string& s) {
  if (s == "mamba") return ReconArch::mamba;
  if (s == "conv1") return ReconArch::conv1;
  if (s == "conv3") return ReconArch::conv3;
  if (s == "attention") return ReconArch::attention;
  throw ArgumentError("unknown recon_arch '" + s + "' (expected mamba, conv1, conv3 or attention)");
}

const char* to_string(ReconArch arch) {
  switch (arch) {
    case ReconArch::mamba: return "mamba";
    case ReconArch::conv1: return "conv1";
    case ReconArch::conv3: return "conv3";
    case ReconArch::attention: return "attention";
  }
  return "?";
}

void MfrmConfig::validate(std::size_t grid_size) const {
  if (embed_dim < 1 || depth < 1 || state_dim < 1 || conv_width < 1 || expand_factor < 1 || reduced_channels < 1)
    throw ArgumentError("mfrm: embed_dim, depth, state_dim, conv_width, expand_factor and reduced_channels must be >= 1");
  if (patch_size != 1 && patch_size != 2 && patch_size != 4 && patch_size != 8)
    throw ArgumentError("mfrm: patch_size must be 1, 2, 4 or 8");
  if (grid_size % static_cast<std::size_t>(patch_size) != 0)
    throw ShapeError("mfrm: grid " + std::to_string(grid_size) + " not divisible by patch size " +
                     std::to_string(patch_size));
}

// ---------------------------------------------------------------- selective scan

template <typename T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a_log, const Tensor<T>& b,
                         const Tensor<T>& c, const Tensor<T>& d_skip, ScanDirection direction) {
  auto fail = [](const std::string& m) { throw ShapeError("selective_scan: " + m); };
  if (x.ndim() != 2) fail("x must be T x D_inner, got " + shape_str(x.shape()));
  const std::size_t len = x.dim(0), di = x.dim(1);
  if (delta.shape() != x.shape()) fail("delta shape " + shape_str(delta.shape()) + " != x shape " + shape_str(x.shape()));
  if (a_log.ndim() != 2 || a_log.dim(0) != di) fail("a_log must be D_inner x N, got " + shape_str(a_log.shape()));
  const std::size_t n = a_log.dim(1);
  if (b.shape() != Shape{len, n}) fail("B must be T x N, got " + shape_str(b.shape()));
  if (c.shape() != Shape{len, n}) fail("C must be T x N, got " + shape_str(c.shape()));
  if (d_skip.numel() != di) fail("d_skip must have D_inner entries");

  const bool fwd = direction == ScanDirection::forward;
  auto index = [len, fwd](std::size_t s) { return fwd ? s : len - 1 - s; };

  std::vector<T> a(di * n);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);

  const bool keep = grad_enabled() && (x.requires_grad() || delta.requires_grad() || a_log.requires_grad() ||
                                       b.requires_grad() || c.requires_grad() || d_skip.requires_grad());
  auto states = std::make_shared<std::vector<T>>(keep ? len * di * n : 0);
  std::vector<T> h(di * n, T(0));
  std::vector<T> y(len * di);
  for (std::size_t s = 0; s < len; ++s) {
    const std::size_t t = index(s);
    const T* bt = b.data().data() + t * n;
    const T* ct = c.data().data() + t * n;
    for (std::size_t d = 0; d < di; ++d) {
      const T dt = delta[t * di + d], xv = x[t * di + d];
      T* hd = h.data() + d * n;
      const T* ad = a.data() + d * n;
      T acc = T(0);
      for (std::size_t k = 0; k < n; ++k) {
        hd[k] = std::exp(dt * ad[k]) * hd[k] + dt * bt[k] * xv;
        acc += ct[k] * hd[k];
      }
      y[t * di + d] = acc + d_skip[d] * xv;
    }
    if (keep) std::copy(h.begin(), h.end(), states->begin() + s * di * n);
  }

  auto a_shared = std::make_shared<std::vector<T>>(std::move(a));
  return make_result<T>(
      x.shape(), std::move(y), {x, delta, a_log, b, c, d_skip},
      [=](const std::vector<T>& g) {
        T* gx = grad_of(x);
        T* gdelta = grad_of(delta);
        T* ga_log = grad_of(a_log);
        T* gb = grad_of(b);
        T* gc = grad_of(c);
        T* gd = grad_of(d_skip);
        const auto& av = *a_shared;
        std::vector<T> carry(di * n, T(0));  // dL/dh_s arriving from step s+1
        std::vector<T> ga(di * n, T(0));
        for (std::size_t s = len; s-- > 0;) {
          const std::size_t t = index(s);
          const T* hs = states->data() + s * di * n;
          const T* hp = s > 0 ? states->data() + (s - 1) * di * n : nullptr;
          const T* bt = b.data().data() + t * n;
          const T* ct = c.data().data() + t * n;
          for (std::size_t d = 0; d < di; ++d) {
            const T gy = g[t * di + d];
            const T dt = delta[t * di + d], xv = x[t * di + d];
            if (gd) gd[d] += gy * xv;
            T gxv = gy * d_skip[d];
            T gdt = T(0);
            for (std::size_t k = 0; k < n; ++k) {
              const std::size_t i = d * n + k;
              if (gc) gc[t * n + k] += gy * hs[i];
              const T ght = carry[i] + gy * ct[k];
              const T abar = std::exp(dt * av[i]);
              const T hprev = hp ? hp[i] : T(0);
              const T g_abar = ght * hprev;
              gdt += g_abar * abar * av[i] + ght * bt[k] * xv;
              ga[i] += g_abar * abar * dt;
              if (gb) gb[t * n + k] += ght * dt * xv;
              gxv += ght * dt * bt[k];
              carry[i] = ght * abar;
            }
            if (gx) gx[t * di + d] += gxv;
            if (gdelta) gdelta[t * di + d] += gdt;
          }
        }
        if (ga_log)
          for (std::size_t i = 0; i < ga.size(); ++i) ga_log[i] += ga[i] * av[i];
      });
}

// ---------------------------------------------------------------- Mamba block

namespace {

template <typename T>
SsmParams<T> make_ssm(const MfrmConfig& cfg, const std::string& p, ParamStore<T>& store, std::uint64_t seed) {
  const auto di = static_cast<std::size_t>(cfg.inner_dim());
  const auto n = static_cast<std::size_t>(cfg.state_dim);
  const auto r = static_cast<std::size_t>(cfg.resolved_dt_rank());
  const auto w = static_cast<std::size_t>(cfg.conv_width);
  SsmParams<T> s;
  s.conv_weight = init::param(store, p + ".conv_weight", {di, w}, init::uniform_range(1.0 / std::sqrt(double(w))), seed);
  s.conv_bias = init::param(store, p + ".conv_bias", {di}, init::zeros(), seed);
  s.x_proj = init::param(store, p + ".x_proj", {r + 2 * n, di}, init::trunc_normal(0.02), seed);
  s.dt_weight = init::param(store, p + ".dt_weight", {di, r}, init::uniform_range(1.0 / std::sqrt(double(r))), seed);
  // Softplus inverse of a log-uniform step size in [1e-3, 1e-1].
  s.dt_bias = init::param(store, p + ".dt_bias", {di},
                          [](Rng& rng, std::size_t) {
                            const double dt = std::exp(uniform(rng, std::log(1e-3), std::log(1e-1)));
                            return dt + std::log(-std::expm1(-dt));
                          },
                          seed);
  s.a_log = init::param(store, p + ".a_log", {di, n},
                        [n](Rng&, std::size_t i) { return std::log(static_cast<double>(i % n + 1)); }, seed);
  s.d_skip = init::param(store, p + ".d_skip", {di}, init::constant(1.0), seed);
  return s;
}

}  // namespace

template <typename T>
Tensor<T> SsmParams<T>::apply(const Tensor<T>& x, int state_dim, int dt_rank) const {
  const auto n = static_cast<std::size_t>(state_dim), r = static_cast<std::size_t>(dt_rank);
  const Tensor<T> u = ops::silu(ops::conv1d_causal_depthwise(x, conv_weight, conv_bias));
  const Tensor<T> proj = ops::linear(u, x_proj);
  const Tensor<T> dt_in = ops::slice_cols(proj, 0, r);
  const Tensor<T> b = ops::slice_cols(proj, r, r + n);
  const Tensor<T> c = ops::slice_cols(proj, r + n, r + 2 * n);
  const Tensor<T> delta = ops::softplus(ops::linear(dt_in, dt_weight, dt_bias));
  return selective_scan(u, delta, a_log, b, c, d_skip, ScanDirection::forward);
}

template <typename T>
MambaBlock<T>::MambaBlock(const MfrmConfig& cfg, const std::string& p, ParamStore<T>& store, std::uint64_t seed)
    : state_dim_(cfg.state_dim), dt_rank_(cfg.resolved_dt_rank()) {
  const auto d = static_cast<std::size_t>(cfg.embed_dim), di = static_cast<std::size_t>(cfg.inner_dim());
  norm_gain = init::param(store, p + ".norm_gain", {d}, init::constant(1.0), seed);
  norm_bias = init::param(store, p + ".norm_bias", {d}, init::zeros(), seed);
  in_x = init::param(store, p + ".in_x", {di, d}, init::trunc_normal(0.02), seed);
  in_z = init::param(store, p + ".in_z", {di, d}, init::trunc_normal(0.02), seed);
  fwd = make_ssm(cfg, p + ".fwd", store, seed);
  bwd = make_ssm(cfg, p + ".bwd", store, seed);
  out_proj = init::param(store, p + ".out_proj", {d, di}, init::trunc_normal(0.02), seed);
}

template <typename T>
TokenSequence<T> MambaBlock<T>::forward(const TokenSequence<T>& in) const {
  const Tensor<T> n = ops::normalize(in.tokens, ops::NormKind::layer, norm_gain, norm_bias);
  const Tensor<T> x = ops::linear(n, in_x);
  const Tensor<T> z = ops::linear(n, in_z);
  const Tensor<T> y_f = fwd.apply(x, state_dim_, dt_rank_);
  const Tensor<T> y_b = ops::reverse_rows(bwd.apply(ops::reverse_rows(x), state_dim_, dt_rank_));
  const Tensor<T> gate = ops::silu(z);
  const Tensor<T> mixed = ops::add(ops::mul(y_f, gate), ops::mul(y_b, gate));
  return {ops::add(ops::linear(mixed, out_proj), in.tokens), in.layer_index + 1};
}

// ---------------------------------------------------------------- mixer blocks

template <typename T>
MixerBlock<T>::MixerBlock(const MfrmConfig& cfg, std::size_t grid_h, std::size_t grid_w, const std::string& p,
                          ParamStore<T>& store, std::uint64_t seed)
    : arch_(cfg.arch), gh_(grid_h), gw_(grid_w) {
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  if (arch_ == ReconArch::mamba) {
    mamba_ = std::make_unique<MambaBlock<T>>(cfg, p, store, seed);
    return;
  }
  norm_gain_ = init::param(store, p + ".norm_gain", {d}, init::constant(1.0), seed);
  norm_bias_ = init::param(store, p + ".norm_bias", {d}, init::zeros(), seed);
  switch (arch_) {
    case ReconArch::conv1:
      w1_ = init::param(store, p + ".w1", {2 * d, d}, init::trunc_normal(0.02), seed);
      b1_ = init::param(store, p + ".b1", {2 * d}, init::zeros(), seed);
      w2_ = init::param(store, p + ".w2", {d, 2 * d}, init::trunc_normal(0.02), seed);
      b2_ = init::param(store, p + ".b2", {d}, init::zeros(), seed);
      break;
    case ReconArch::conv3:
      w1_ = init::param(store, p + ".w1", {d, d, 3, 3}, init::kaiming(9.0 * d), seed);
      b1_ = init::param(store, p + ".b1", {d}, init::zeros(), seed);
      w2_ = init::param(store, p + ".w2", {d, d, 3, 3}, init::trunc_normal(0.02), seed);
      b2_ = init::param(store, p + ".b2", {d}, init::zeros(), seed);
      break;
    case ReconArch::attention:
      wq_ = init::param(store, p + ".wq", {d, d}, init::trunc_normal(0.02), seed);
      wk_ = init::param(store, p + ".wk", {d, d}, init::trunc_normal(0.02), seed);
      wv_ = init::param(store, p + ".wv", {d, d}, init::trunc_normal(0.02), seed);
      wo_ = init::param(store, p + ".wo", {d, d}, init::trunc_normal(0.02), seed);
      norm2_gain_ = init::param(store, p + ".norm2_gain", {d}, init::constant(1.0), seed);
      norm2_bias_ = init::param(store, p + ".norm2_bias", {d}, init::zeros(), seed);
      w1_ = init::param(store, p + ".w1", {2 * d, d}, init::trunc_normal(0.02), seed);
      b1_ = init::param(store, p + ".b1", {2 * d}, init::zeros(), seed);
      w2_ = init::param(store, p + ".w2", {d, 2 * d}, init::trunc_normal(0.02), seed);
      b2_ = init::param(store, p + ".b2", {d}, init::zeros(), seed);
      break;
    case ReconArch::mamba: break;
  }
}

template <typename T>
TokenSequence<T> MixerBlock<T>::forward(const TokenSequence<T>& in) const {
  if (mamba_) return mamba_->forward(in);
  const Tensor<T>& x = in.tokens;
  const std::size_t len = x.dim(0), d = x.dim(1);
  const Tensor<T> n = ops::normalize(x, ops::NormKind::layer, norm_gain_, norm_bias_);
  Tensor<T> out;
  switch (arch_) {
    case ReconArch::conv1:
      out = ops::add(x, ops::linear(ops::relu(ops::linear(n, w1_, b1_)), w2_, b2_));
      break;
    case ReconArch::conv3: {
      Tensor<T> grid = ops::reshape(ops::transpose(n), {d, gh_, gw_});
      grid = ops::conv2d(ops::relu(ops::conv2d(grid, w1_, b1_, 1, 1)), w2_, b2_, 1, 1);
      out = ops::add(x, ops::transpose(ops::reshape(grid, {d, len})));
      break;
    }
    case ReconArch::attention: {
      const Tensor<T> q = ops::linear(n, wq_), k = ops::linear(n, wk_), v = ops::linear(n, wv_);
      const Tensor<T> scores =
          ops::softmax_rows(ops::scale(ops::matmul(q, ops::transpose(k)), T(1) / std::sqrt(static_cast<T>(d))));
      const Tensor<T> h = ops::add(x, ops::linear(ops::matmul(scores, v), wo_));
      const Tensor<T> n2 = ops::normalize(h, ops::NormKind::layer, norm2_gain_, norm2_bias_);
      out = ops::add(h, ops::linear(ops::relu(ops::linear(n2, w1_, b1_)), w2_, b2_));
      break;
    }
    case ReconArch::mamba: break;
  }
  return {out, in.layer_index + 1};
}

// ---------------------------------------------------------------- MFRM

template <typename T>
Mfrm<T>::Mfrm(const MfrmConfig& cfg, std::size_t channels, std::size_t grid_size, ParamStore<T>& store,
              std::uint64_t seed)
    : cfg_(cfg), channels_(channels), grid_(grid_size) {
  cfg_.validate(grid_size);
  const auto c1 = static_cast<std::size_t>(cfg_.reduced_channels);
  const auto d = static_cast<std::size_t>(cfg_.embed_dim);
  const auto p = static_cast<std::size_t>(cfg_.patch_size);
  if (c1 > channels) throw ArgumentError("mfrm: reduced_channels exceeds the feature channel count");
  reduce_w_ = init::param(store, "mfrm.reduce.weight", {c1, channels, 1, 1}, init::normal(std::sqrt(1.0 / channels)), seed);
  reduce_b_ = init::param(store, "mfrm.reduce.bias", {c1}, init::zeros(), seed);
  patch_w_ = init::param(store, "mfrm.patch.weight", {d, c1, p, p}, init::trunc_normal(0.02), seed);
  patch_b_ = init::param(store, "mfrm.patch.bias", {d}, init::zeros(), seed);
  pos_ = init::param(store, "mfrm.pos", {tokens(), d}, init::zeros(), seed);
  const std::size_t side = grid_ / p;
  for (int l = 0; l < cfg_.depth; ++l)
    blocks_.emplace_back(cfg_, side, side, "mfrm.block" + std::to_string(l), store, seed);

  int up = 0;
  for (int q = cfg_.patch_size; q > 1; q /= 2) ++up;
  const std::size_t chans[4] = {d, d, c1, c1};
  for (int i = 0; i < 3; ++i) {
    const int stride = i < up ? 2 : 1;
    const std::size_t k = stride == 2 ? 2 : 3;
    const std::string name = "mfrm.decoder" + std::to_string(i);
    const double fan_in = static_cast<double>(chans[i] * k * k) / (stride * stride);
    dec_w_.push_back(init::param(store, name + ".weight", {chans[i], chans[i + 1], k, k}, init::kaiming(fan_in), seed));
    dec_b_.push_back(init::param(store, name + ".bias", {chans[i + 1]}, init::zeros(), seed));
    dec_stride_.push_back(stride);
  }
  expand_w_ = init::param(store, "mfrm.expand.weight", {channels, c1, 1, 1}, init::normal(std::sqrt(1.0 / c1)), seed);
  expand_b_ = init::param(store, "mfrm.expand.bias", {channels}, init::zeros(), seed);
}

template <typename T>
Tensor<T> Mfrm<T>::reduce(const Tensor<T>& f) const {
  return ops::conv2d(f, reduce_w_, reduce_b_);
}

template <typename T>
Tensor<T> Mfrm<T>::expand(const Tensor<T>& f) const {
  return ops::conv2d(f, expand_w_, expand_b_);
}

template <typename T>
TokenSequence<T> Mfrm<T>::patch_embed(const Tensor<T>& f) const {
  if (f.ndim() != 3 || f.dim(1) % cfg_.patch_size || f.dim(2) % cfg_.patch_size)
    throw ShapeError("patch_embed: input " + shape_str(f.shape()) + " not divisible by patch size " +
                     std::to_string(cfg_.patch_size));
  const Tensor<T> grid = ops::conv2d(f, patch_w_, patch_b_, cfg_.patch_size, 0);
  const std::size_t d = grid.dim(0), t = grid.dim(1) * grid.dim(2);
  const Tensor<T> seq = ops::transpose(ops::reshape(grid, {d, t}));
  if (seq.shape() != pos_.shape())
    throw ShapeError("patch_embed: " + std::to_string(t) + " tokens, position table has " +
                     std::to_string(pos_.dim(0)));
  return {ops::add(seq, pos_), 0};
}

template <typename T>
Tensor<T> Mfrm<T>::unpatch(const TokenSequence<T>& tokens) const {
  const std::size_t side = grid_ / static_cast<std::size_t>(cfg_.patch_size);
  const std::size_t d = tokens.tokens.dim(1);
  return ops::reshape(ops::transpose(tokens.tokens), {d, side, side});
}

template <typename T>
Tensor<T> Mfrm<T>::decode(const Tensor<T>& latent) const {
  Tensor<T> x = latent;
  for (std::size_t i = 0; i < dec_w_.size(); ++i) {
    const int s = dec_stride_[i];
    x = ops::conv_transpose2d(x, dec_w_[i], dec_b_[i], s, s == 2 ? 0 : 1);
    if (i + 1 < dec_w_.size())
      x = ops::relu(ops::normalize(x, ops::NormKind::instance));
    else
      x = ops::tanh(x);
  }
  return x;
}

template <typename T>
FeatureStack<T> Mfrm<T>::forward(const FeatureStack<T>& f) const {
  if (f.data.ndim() != 3 || f.channels() != channels_ || f.height() != grid_ || f.width() != grid_)
    throw ShapeError("mfrm: expected features [" + std::to_string(channels_) + "x" + std::to_string(grid_) + "x" +
                     std::to_string(grid_) + "], got " + shape_str(f.data.shape()));
  TokenSequence<T> seq = patch_embed(reduce(f.data));
  for (const auto& b : blocks_) seq = b.forward(seq);
  return {expand(decode(unpatch(seq))), FeatureOrigin::f_hat};
}

template Tensor<float> selective_scan(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                      const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, ScanDirection);
template Tensor<double> selective_scan(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                       ScanDirection);
template struct SsmParams<float>;
template struct SsmParams<double>;
template class MambaBlock<float>;
template class MambaBlock<double>;
template class MixerBlock<float>;
template class MixerBlock<double>;
template class Mfrm<float>;
template class Mfrm<double>;

}  // namespace almrr
