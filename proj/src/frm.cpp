#include "almrr/frm.hpp"

#include <algorithm>

#include "almrr/init.hpp"
#include "almrr/ops.hpp"

namespace almrr {

template <typename T>
AnomalyMap to_anomaly_map(const Tensor<T>& map, std::string id) {
  if (map.ndim() != 3 || map.dim(0) != 1) throw ShapeError("anomaly map must be 1 x H x W, got " + shape_str(map.shape()));
  AnomalyMap m{map.dim(1), map.dim(2), std::vector<double>(map.numel()), std::move(id)};
  for (std::size_t i = 0; i < map.numel(); ++i) m.scores[i] = static_cast<double>(map[i]);
  return m;
}

void FrmConfig::validate(std::size_t grid_size, std::size_t image_size) const {
  if (depth < 1) throw ArgumentError("frm: depth must be >= 1");
  if (base_channels < 1) throw ArgumentError("frm: base_channels must be >= 1");
  const std::size_t down = std::size_t{1} << (depth - 1);
  if (grid_size % down) throw ShapeError("frm: grid " + std::to_string(grid_size) + " not divisible by 2^(depth-1)");
  if (image_size < grid_size || image_size % grid_size)
    throw ShapeError("frm: image size must be a multiple of the grid size");
  const std::size_t ratio = image_size / grid_size;
  if (ratio & (ratio - 1)) throw ShapeError("frm: image/grid ratio must be a power of two");
}

template <typename T>
Tensor<T> channel_mean(const FeatureStack<T>& stack) {
  return ops::channel_mean(stack.data);
}

template <typename T>
Frm<T>::Frm(const FrmConfig& cfg, std::size_t grid_size, std::size_t image_size, ParamStore<T>& store,
            std::uint64_t seed)
    : cfg_(cfg), grid_(grid_size), image_(image_size) {
  cfg_.validate(grid_size, image_size);
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    return Conv{init::param(store, name + ".weight", {out, in, k, k}, init::kaiming(double(in * k * k)), seed),
                init::param(store, name + ".bias", {out}, init::zeros(), seed)};
  };
  auto up = [&](const std::string& name, std::size_t in, std::size_t out) {
    return Conv{init::param(store, name + ".weight", {in, out, 2, 2}, init::kaiming(double(in)), seed),
                init::param(store, name + ".bias", {out}, init::zeros(), seed)};
  };
  std::vector<std::size_t> ch;
  for (int i = 0; i < cfg_.depth; ++i) ch.push_back(static_cast<std::size_t>(cfg_.base_channels) << i);
  std::size_t in = 2;
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::string p = "frm.enc" + std::to_string(i);
    enc_.emplace_back(conv(p + ".a", in, ch[i], 3), conv(p + ".b", ch[i], ch[i], 3));
    in = ch[i];
  }
  for (int i = cfg_.depth - 2; i >= 0; --i) {
    const std::string p = "frm.dec" + std::to_string(i);
    up_.push_back(up(p + ".up", ch[i + 1], ch[i]));
    dec_.emplace_back(conv(p + ".a", 2 * ch[i], ch[i], 3), conv(p + ".b", ch[i], ch[i], 3));
  }
  std::size_t c = ch[0];
  for (std::size_t r = image_ / grid_, i = 0; r > 1; r /= 2, ++i) {
    const std::size_t next = std::max<std::size_t>(c / 2, 4);
    lift_.push_back(up("frm.lift" + std::to_string(i), c, next));
    c = next;
  }
  head_weight = init::param(store, "frm.head.weight", {1, c, 3, 3}, init::kaiming(double(c * 9)), seed);
  head_bias = init::param(store, "frm.head.bias", {1}, init::zeros(), seed);
}

template <typename T>
Tensor<T> Frm<T>::refine(const Tensor<T>& mean_f, const Tensor<T>& mean_fhat) const {
  const Shape expect{1, grid_, grid_};
  if (mean_f.shape() != expect || mean_fhat.shape() != expect)
    throw ShapeError("refine: expected two " + shape_str(expect) + " maps, got " + shape_str(mean_f.shape()) +
                     " and " + shape_str(mean_fhat.shape()));
  Tensor<T> x = ops::concat<T>({mean_f, mean_fhat});
  std::vector<Tensor<T>> skips;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    if (i) x = ops::maxpool2x2(x);
    x = ops::relu(ops::conv2d(x, enc_[i].first.w, enc_[i].first.b, 1, 1));
    x = ops::relu(ops::conv2d(x, enc_[i].second.w, enc_[i].second.b, 1, 1));
    skips.push_back(x);
  }
  for (std::size_t j = 0; j < up_.size(); ++j) {
    const Tensor<T>& skip = skips[skips.size() - 2 - j];
    x = ops::relu(ops::conv_transpose2d(x, up_[j].w, up_[j].b, 2, 0));
    x = ops::concat<T>({x, skip});
    x = ops::relu(ops::conv2d(x, dec_[j].first.w, dec_[j].first.b, 1, 1));
    x = ops::relu(ops::conv2d(x, dec_[j].second.w, dec_[j].second.b, 1, 1));
  }
  for (const auto& l : lift_) x = ops::relu(ops::conv_transpose2d(x, l.w, l.b, 2, 0));
  return ops::sigmoid(ops::conv2d(x, head_weight, head_bias, 1, 1));
}

template AnomalyMap to_anomaly_map(const Tensor<float>&, std::string);
template AnomalyMap to_anomaly_map(const Tensor<double>&, std::string);
template Tensor<float> channel_mean(const FeatureStack<float>&);
template Tensor<double> channel_mean(const FeatureStack<double>&);
template class Frm<float>;
template class Frm<double>;

}  // namespace almrr
