#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "almrr/image.hpp"

namespace almrr {

/// Gradient noise sampled on an H x W pixel grid.
struct PerlinField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // in [-1, 1]
  int res_y = 1;
  int res_x = 1;
  std::uint64_t seed = 0;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Classic 2-D Perlin noise with a quintic fade and `res_y` x `res_x` lattice
/// cells. Lattice points evaluate to exactly zero. When the resolution does
/// not divide the size, the field is generated on the next multiple and
/// cropped.
PerlinField perlin(std::size_t height, std::size_t width, int res_y, int res_x, std::uint64_t seed);

struct MaskAreaBounds {
  double min_fraction = 0.001;
  double max_fraction = 0.30;
};

/// mask = field >= threshold (after dividing by max |field| when requested),
/// with no area check.
Mask threshold_field(const PerlinField& field, double threshold, bool max_abs_normalize = false);

/// Thresholds the field; if the mask area leaves `bounds`, regenerates the
/// field with derived seeds up to `max_resamples` times before throwing.
Mask binarize(const PerlinField& field, double threshold, bool max_abs_normalize = false,
              MaskAreaBounds bounds = {}, int max_resamples = 10);

struct SynthPair {
  Image image_a;
  Mask mask;
  double alpha = 1.0;
  std::string source_texture_id;
};

/// Blends texture `a` into `image` under `mask` with opacity `alpha`:
///   unmasked pixels keep `image` bit-exactly, masked pixels become
///   image + alpha * (a - image) (exactly `a` at alpha = 1).
SynthPair synthesize(const Image& image, const Image& a, const Mask& mask, double alpha,
                     std::string texture_id = {});

/// Number of synthesize() calls made by this process.
std::uint64_t synthesize_call_count();

enum class TextureKind { stripes, checkers, blurred_noise };

/// Random procedural texture of the given family; fully determined by `seed`.
Image procedural_texture(TextureKind kind, std::size_t height, std::size_t width, std::uint64_t seed);

/// Source of foreign textures: the built-in procedural bank or a flat
/// directory of image files.
class TextureSource {
 public:
  /// Built-in bank; `stream` separates independent texture populations.
  static TextureSource builtin(std::uint64_t stream = 0);
  /// Every image file in `dir` (sorted by name), resized to `height` x `width`.
  static TextureSource directory(const std::filesystem::path& dir, std::size_t height, std::size_t width);

  /// Draws one texture of the requested size.
  Image sample(std::uint64_t seed, std::size_t height, std::size_t width, std::string* id = nullptr) const;
  bool is_builtin() const { return images_.empty(); }

 private:
  std::uint64_t stream_ = 0;
  std::vector<Image> images_;
  std::vector<std::string> ids_;
};

struct SynthOptions {
  double alpha_min = 0.15;
  double alpha_max = 1.0;
  std::vector<int> resolutions{2, 4, 8, 16};
  double threshold = 0.5;
  MaskAreaBounds bounds{};
};

/// Draws lattice resolution, mask, opacity and texture from one seed and
/// blends them into `image`.
SynthPair sample_anomaly(const Image& image, const TextureSource& textures, const SynthOptions& options,
                         std::uint64_t seed);

}  // namespace almrr
