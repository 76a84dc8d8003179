#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace almrr {

/// Planar RGB (or single-channel) raster with values in [0, 1], laid out
/// channels x height x width.
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  std::size_t plane() const { return height * width; }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }
};

/// Binary H x W mask stored as bytes (0 or 1).
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w, fill) {}
  std::size_t area() const;
  double area_fraction() const { return data.empty() ? 0.0 : static_cast<double>(area()) / data.size(); }
};

/// Half-pixel bilinear resize of every channel.
Image resize(const Image& img, std::size_t height, std::size_t width);
/// Nearest-neighbour resize of a mask.
Mask resize(const Mask& mask, std::size_t height, std::size_t width);

/// Quantizes to 8 bits (round half up) and back; the value an image takes
/// after a PNG round trip.
Image quantize8(const Image& img);

/// Reads an 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or binary PPM/PGM.
/// Grayscale inputs are replicated to 3 channels when `rgb` is set.
Image read_image(const std::filesystem::path& path, bool rgb = true);
/// Writes an 8-bit PNG with 1 or 3 channels.
void write_png(const std::filesystem::path& path, const Image& img);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
/// Reads a mask image, binarized at half of its dynamic range.
Mask read_mask(const std::filesystem::path& path);

bool is_image_file(const std::filesystem::path& path);

/// Observer called with every path opened by read_image / read_mask; used by
/// tests to audit which files a pipeline stage touches.
using ReadObserver = std::function<void(const std::filesystem::path&)>;
void set_read_observer(ReadObserver observer);

}  // namespace almrr
