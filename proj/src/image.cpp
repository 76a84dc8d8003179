#include "almrr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include "almrr/error.hpp"

namespace almrr {

namespace {

std::mutex observer_mutex;
ReadObserver read_observer;

void notify_read(const std::filesystem::path& path) {
  std::lock_guard lock(observer_mutex);
  if (read_observer) read_observer(path);
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

// Interleaved 8-bit samples -> planar [0,1] image.
Image from_interleaved(const std::vector<std::uint8_t>& px, std::size_t channels, std::size_t h, std::size_t w,
                       bool rgb) {
  const std::size_t out_c = (channels == 1 && rgb) ? 3 : channels;
  Image img(out_c, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < out_c; ++c) {
        const std::size_t src_c = channels == 1 ? 0 : c;
        img.at(c, y, x) = px[(y * w + x) * channels + src_c] / 255.0;
      }
  return img;
}

std::vector<std::uint8_t> read_png_pixels(const std::filesystem::path& path, bool rgb, std::size_t& h,
                                          std::size_t& w) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw DataContractError("cannot decode PNG " + path.string() + ": " + image.message);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataContractError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  h = image.height;
  w = image.width;
  return buf;
}

std::vector<std::uint8_t> read_pnm_pixels(const std::filesystem::path& path, std::size_t& channels, std::size_t& h,
                                          std::size_t& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataContractError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P5") throw DataContractError("unsupported PNM variant in " + path.string());
  channels = magic == "P6" ? 3 : 1;
  auto next_int = [&]() {
    int v = 0;
    for (;;) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      if (!(in >> v)) throw DataContractError("malformed PNM header in " + path.string());
      return v;
    }
  };
  const int wi = next_int(), hi = next_int(), maxval = next_int();
  if (wi <= 0 || hi <= 0 || maxval != 255) throw DataContractError("unsupported PNM geometry in " + path.string());
  in.get();
  w = static_cast<std::size_t>(wi);
  h = static_cast<std::size_t>(hi);
  std::vector<std::uint8_t> buf(w * h * channels);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw DataContractError("truncated PNM data in " + path.string());
  return buf;
}

}  // namespace

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Image resize(const Image& img, std::size_t height, std::size_t width) {
  if (img.height == height && img.width == width) return img;
  Image out(img.channels, height, width);
  auto taps = [](std::size_t in, std::size_t out_n, std::size_t o, std::size_t& i0, std::size_t& i1, double& f) {
    double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    if (src < 0.0) src = 0.0;
    i0 = std::min(static_cast<std::size_t>(src), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    f = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    taps(img.height, height, y, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double fx;
      taps(img.width, width, x, x0, x1, fx);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(c, y0, x0) + fx * (img.at(c, y0, x1) - img.at(c, y0, x0));
        const double bot = img.at(c, y1, x0) + fx * (img.at(c, y1, x1) - img.at(c, y1, x0));
        out.at(c, y, x) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

Mask resize(const Mask& mask, std::size_t height, std::size_t width) {
  if (mask.height == height && mask.width == width) return mask;
  Mask out(height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sy = std::min(mask.height - 1, y * mask.height / height);
      const std::size_t sx = std::min(mask.width - 1, x * mask.width / width);
      out.data[y * width + x] = mask.data[sy * mask.width + sx];
    }
  return out;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& v : out.data) v = to_byte(v) / 255.0;
  return out;
}

bool is_image_file(const std::filesystem::path& path) {
  const auto e = lower_ext(path);
  return e == ".png" || e == ".ppm" || e == ".pgm" || e == ".pnm";
}

Image read_image(const std::filesystem::path& path, bool rgb) {
  notify_read(path);
  std::size_t h = 0, w = 0;
  const auto ext = lower_ext(path);
  if (ext == ".png") {
    auto px = read_png_pixels(path, rgb, h, w);
    return from_interleaved(px, rgb ? 3 : 1, h, w, rgb);
  }
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    std::size_t channels = 0;
    auto px = read_pnm_pixels(path, channels, h, w);
    if (!rgb && channels == 3) {
      Image color = from_interleaved(px, 3, h, w, true);
      Image gray(1, h, w);
      for (std::size_t i = 0; i < h * w; ++i)
        gray.data[i] = (color.data[i] + color.data[h * w + i] + color.data[2 * h * w + i]) / 3.0;
      return gray;
    }
    return from_interleaved(px, channels, h, w, rgb);
  }
  throw DataContractError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ArgumentError("write_png supports 1 or 3 channels");
  std::vector<std::uint8_t> px(img.channels * img.height * img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        px[(y * img.width + x) * img.channels + c] = to_byte(img.at(c, y, x));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, px.data(), 0, nullptr))
    throw Error("cannot write PNG " + path.string() + ": " + image.message);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  Image img(1, mask.height, mask.width);
  for (std::size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 1.0 : 0.0;
  write_png(path, img);
}

Mask read_mask(const std::filesystem::path& path) {
  const Image img = read_image(path, false);
  Mask m(img.height, img.width);
  if (img.data.empty()) return m;
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  // A constant mask is all-background unless it is fully white.
  const double thr = (*hi > *lo) ? (*lo + *hi) / 2.0 : 0.5;
  for (std::size_t i = 0; i < img.data.size(); ++i) m.data[i] = img.data[i] > thr ? 1 : 0;
  return m;
}

void set_read_observer(ReadObserver observer) {
  std::lock_guard lock(observer_mutex);
  read_observer = std::move(observer);
}

}  // namespace almrr
