#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "almrr/image.hpp"
#include "almrr/param_store.hpp"

namespace almrr {

/// Frozen multi-scale feature extractor description. Each stage is one
/// k x k convolution + ReLU; `stage_strides` are cumulative w.r.t. the input.
struct BackboneSpec {
  std::string name = "tinytex";
  std::vector<int> stage_channels{16, 32, 64};
  std::vector<int> stage_strides{2, 4, 8};
  /// Indices of stages whose maps are embedded, in increasing order.
  std::vector<int> selected_stages{0, 1, 2};
  int kernel_size = 3;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stdev{0.229, 0.224, 0.225};
  /// "builtin-random" or a checkpoint path the weights were imported from.
  std::string weights_source = "builtin-random";
  std::uint64_t seed = 20240611;

  /// 16/32/64 channels at strides 2/4/8.
  static BackboneSpec tinytex();
  /// 256/512/1024 channels at strides 4/8/16 (ResNet-50 block1..block3 widths).
  static BackboneSpec resnet50_like();
  static BackboneSpec by_name(const std::string& name);

  /// Throws on an inconsistent spec.
  void validate() const;
  /// Sum of selected stage channels.
  std::size_t embed_channels() const;
  /// Cumulative stride of the deepest stage that must be computed.
  int deepest_stride() const;
};

enum class FeatureOrigin { phi, f_input, f_hat };

const char* to_string(FeatureOrigin origin);

/// C x H0 x W0 dense feature map with its provenance.
template <typename T>
struct FeatureStack {
  Tensor<T> data;
  FeatureOrigin origin = FeatureOrigin::phi;

  std::size_t channels() const { return data.dim(0); }
  std::size_t height() const { return data.dim(1); }
  std::size_t width() const { return data.dim(2); }
};

/// Image -> normalized 3 x H x W tensor using the backbone's channel mean and std.
template <typename T>
Tensor<T> image_tensor(const Image& img, const BackboneSpec& spec);

/// Frozen CNN. Parameters live in the store under "backbone." and are never
/// trainable.
template <typename T>
class Backbone {
 public:
  Backbone(BackboneSpec spec, ParamStore<T>& store);

  /// One map per selected stage at its native stride.
  std::vector<Tensor<T>> forward(const Image& image) const;
  const BackboneSpec& spec() const { return spec_; }

 private:
  BackboneSpec spec_;
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

/// Multi-scale embedding: stage maps resized to the grid and concatenated.
template <typename T>
class FeatureEmbedder {
 public:
  FeatureEmbedder(BackboneSpec spec, std::size_t grid_size, ParamStore<T>& store);

  FeatureStack<T> embed(const Image& image, FeatureOrigin origin = FeatureOrigin::phi) const;
  /// Shared-weights embedding of the clean image and the augmented image.
  std::pair<FeatureStack<T>, FeatureStack<T>> dual_embed(const Image& clean, const Image& augmented) const;

  const Backbone<T>& backbone() const { return backbone_; }
  std::size_t grid_size() const { return grid_; }
  std::size_t channels() const { return backbone_.spec().embed_channels(); }

 private:
  Backbone<T> backbone_;
  std::size_t grid_;
};

}  // namespace almrr
