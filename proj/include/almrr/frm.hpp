#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "almrr/embed.hpp"
#include "almrr/param_store.hpp"

namespace almrr {

/// H x W anomaly scores in [0, 1].
struct AnomalyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> scores;
  std::string source_image_id;

  double at(std::size_t y, std::size_t x) const { return scores[y * width + x]; }
};

template <typename T>
AnomalyMap to_anomaly_map(const Tensor<T>& map, std::string id = {});

struct FrmConfig {
  int depth = 3;
  int base_channels = 32;

  void validate(std::size_t grid_size, std::size_t image_size) const;
};

/// Channel mean of a feature stack: C x H0 x W0 -> 1 x H0 x W0.
template <typename T>
Tensor<T> channel_mean(const FeatureStack<T>& stack);

/// U-Net-style refinement head. Input: the channel means of F and F_hat
/// concatenated in that order (2 x H0 x W0). Output: 1 x H x W sigmoid map at
/// image resolution, reached by stride-2 transposed convolutions after the
/// U-Net body.
template <typename T>
class Frm {
 public:
  Frm(const FrmConfig& cfg, std::size_t grid_size, std::size_t image_size, ParamStore<T>& store,
      std::uint64_t seed);

  Tensor<T> refine(const Tensor<T>& mean_f, const Tensor<T>& mean_fhat) const;
  const FrmConfig& config() const { return cfg_; }

  /// Final 3x3 convolution producing the logit map.
  Tensor<T> head_weight, head_bias;

 private:
  struct Conv {
    Tensor<T> w, b;
  };
  FrmConfig cfg_;
  std::size_t grid_, image_;
  std::vector<std::pair<Conv, Conv>> enc_;  // two 3x3 convs per level
  std::vector<Conv> up_;                    // 2x2 transposed convs, deepest first
  std::vector<std::pair<Conv, Conv>> dec_;  // two 3x3 convs after each skip concat
  std::vector<Conv> lift_;                  // grid -> image upsampling
};

}  // namespace almrr
