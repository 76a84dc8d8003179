#include "almrr/embed.hpp"

#include <algorithm>
#include <numeric>

#include "almrr/init.hpp"
#include "almrr/ops.hpp"

namespace almrr {

BackboneSpec BackboneSpec::tinytex() { return BackboneSpec{}; }

BackboneSpec BackboneSpec::resnet50_like() {
  BackboneSpec s;
  s.name = "resnet50-like";
  s.stage_channels = {256, 512, 1024};
  s.stage_strides = {4, 8, 16};
  s.selected_stages = {0, 1, 2};
  return s;
}

BackboneSpec BackboneSpec::by_name(const std::string& name) {
  if (name == "tinytex") return tinytex();
  if (name == "resnet50-like") return resnet50_like();
  throw ArgumentError("unknown backbone profile '" + name + "' (expected tinytex or resnet50-like)");
}

void BackboneSpec::validate() const {
  const std::size_t n = stage_channels.size();
  if (n < 2 || n > 4) throw ArgumentError("backbone must have 2 to 4 stages, got " + std::to_string(n));
  if (stage_strides.size() != n) throw ArgumentError("backbone stage_strides must list one stride per stage");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ArgumentError("backbone kernel_size must be odd and >= 1");
  int prev = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (stage_channels[i] < 1) throw ArgumentError("backbone stage channels must be >= 1");
    if (stage_strides[i] < prev || stage_strides[i] % prev != 0)
      throw ArgumentError("backbone cumulative strides must be non-decreasing multiples of each other");
    prev = stage_strides[i];
  }
  if (selected_stages.empty()) throw ArgumentError("backbone must select at least one stage");
  for (std::size_t i = 0; i < selected_stages.size(); ++i) {
    if (selected_stages[i] < 0 || selected_stages[i] >= static_cast<int>(n))
      throw ArgumentError("selected stage " + std::to_string(selected_stages[i]) + " out of range");
    if (i && selected_stages[i] <= selected_stages[i - 1])
      throw ArgumentError("selected stages must be strictly increasing");
  }
  for (double s : stdev)
    if (!(s > 0.0)) throw ArgumentError("backbone channel std must be positive");
}

std::size_t BackboneSpec::embed_channels() const {
  std::size_t c = 0;
  for (int s : selected_stages) c += static_cast<std::size_t>(stage_channels.at(static_cast<std::size_t>(s)));
  return c;
}

int BackboneSpec::deepest_stride() const {
  return stage_strides.at(static_cast<std::size_t>(selected_stages.back()));
}

const char* to_string(FeatureOrigin origin) {
  switch (origin) {
    case FeatureOrigin::phi: return "phi";
    case FeatureOrigin::f_input: return "f_input";
    case FeatureOrigin::f_hat: return "f_hat";
  }
  return "?";
}

template <typename T>
Tensor<T> image_tensor(const Image& img, const BackboneSpec& spec) {
  if (img.channels != 3) throw ShapeError("backbone expects a 3-channel image, got " + std::to_string(img.channels));
  std::vector<T> v(img.data.size());
  const std::size_t plane = img.plane();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      v[c * plane + i] = static_cast<T>((img.data[c * plane + i] - spec.mean[c]) / spec.stdev[c]);
  return Tensor<T>::from({3, img.height, img.width}, std::move(v));
}

template <typename T>
Backbone<T>::Backbone(BackboneSpec spec, ParamStore<T>& store) : spec_(std::move(spec)) {
  spec_.validate();
  const int k = spec_.kernel_size;
  const int last = spec_.selected_stages.back();
  std::size_t in_c = 3;
  for (int i = 0; i <= last; ++i) {
    const auto out_c = static_cast<std::size_t>(spec_.stage_channels[static_cast<std::size_t>(i)]);
    const std::string p = "backbone.stage" + std::to_string(i);
    weights_.push_back(init::param(store, p + ".weight",
                                   {out_c, in_c, static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                                   init::kaiming(static_cast<double>(in_c * k * k)), spec_.seed, true));
    biases_.push_back(init::param(store, p + ".bias", {out_c}, init::zeros(), spec_.seed, true));
    in_c = out_c;
  }
}

template <typename T>
std::vector<Tensor<T>> Backbone<T>::forward(const Image& image) const {
  const int ds = spec_.deepest_stride();
  if (image.height % ds || image.width % ds)
    throw ShapeError("backbone input " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not a multiple of the deepest stride " + std::to_string(ds));
  NoGradGuard no_grad;
  Tensor<T> x = image_tensor<T>(image, spec_);
  std::vector<Tensor<T>> maps;
  int prev_stride = 1;
  std::size_t next_sel = 0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const int stride = spec_.stage_strides[i] / prev_stride;
    prev_stride = spec_.stage_strides[i];
    x = ops::relu(ops::conv2d(x, weights_[i], biases_[i], stride, spec_.kernel_size / 2));
    if (next_sel < spec_.selected_stages.size() && spec_.selected_stages[next_sel] == static_cast<int>(i)) {
      maps.push_back(x);
      ++next_sel;
    }
  }
  return maps;
}

template <typename T>
FeatureEmbedder<T>::FeatureEmbedder(BackboneSpec spec, std::size_t grid_size, ParamStore<T>& store)
    : backbone_(std::move(spec), store), grid_(grid_size) {
  if (grid_ < 1) throw ArgumentError("grid size must be >= 1");
}

template <typename T>
FeatureStack<T> FeatureEmbedder<T>::embed(const Image& image, FeatureOrigin origin) const {
  NoGradGuard no_grad;
  auto maps = backbone_.forward(image);
  for (auto& m : maps)
    if (m.dim(1) != grid_ || m.dim(2) != grid_) m = ops::bilinear_resize(m, grid_, grid_);
  return {ops::concat(maps), origin};
}

template <typename T>
std::pair<FeatureStack<T>, FeatureStack<T>> FeatureEmbedder<T>::dual_embed(const Image& clean,
                                                                           const Image& augmented) const {
  if (!clean.same_size(augmented) || clean.channels != augmented.channels)
    throw ShapeError("dual_embed: clean and augmented images differ in shape");
  return {embed(clean, FeatureOrigin::phi), embed(augmented, FeatureOrigin::f_input)};
}

template Tensor<float> image_tensor<float>(const Image&, const BackboneSpec&);
template Tensor<double> image_tensor<double>(const Image&, const BackboneSpec&);
template class Backbone<float>;
template class Backbone<double>;
template class FeatureEmbedder<float>;
template class FeatureEmbedder<double>;

}  // namespace almrr
