#include "almrr/synth.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numbers>

#include "almrr/error.hpp"
#include "almrr/rng.hpp"

namespace almrr {

namespace {

std::atomic<std::uint64_t> synth_calls{0};

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double lerp(double a, double b, double t) { return a + t * (b - a); }

// Separable box blur, clamped at the borders.
void box_blur(std::vector<double>& v, std::size_t h, std::size_t w, int radius) {
  std::vector<double> tmp(v.size());
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const double norm = 1.0 / static_cast<double>(2 * radius + 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto xx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + d, 0, static_cast<std::ptrdiff_t>(w) - 1);
        s += v[y * w + static_cast<std::size_t>(xx)];
      }
      tmp[y * w + x] = s * norm;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto yy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + d, 0, static_cast<std::ptrdiff_t>(h) - 1);
        s += tmp[static_cast<std::size_t>(yy) * w + x];
      }
      v[y * w + x] = s * norm;
    }
}

std::array<double, 3> random_color(Rng& rng) { return {uniform01(rng), uniform01(rng), uniform01(rng)}; }

Image tint(const std::vector<double>& t, std::size_t h, std::size_t w, const std::array<double, 3>& c0,
           const std::array<double, 3>& c1) {
  Image img(3, h, w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) img.data[c * h * w + i] = std::clamp(c0[c] + t[i] * (c1[c] - c0[c]), 0.0, 1.0);
  return img;
}

}  // namespace

PerlinField perlin(std::size_t height, std::size_t width, int res_y, int res_x, std::uint64_t seed) {
  if (res_y < 1 || res_x < 1) throw ArgumentError("perlin: lattice resolution must be >= 1");
  if (height < static_cast<std::size_t>(res_y) || width < static_cast<std::size_t>(res_x))
    throw ArgumentError("perlin: field " + std::to_string(height) + "x" + std::to_string(width) +
                        " smaller than lattice resolution " + std::to_string(res_y) + "x" + std::to_string(res_x));
  const std::size_t cell_y = (height + res_y - 1) / res_y;
  const std::size_t cell_x = (width + res_x - 1) / res_x;

  Rng rng(seed);
  const std::size_t gy = static_cast<std::size_t>(res_y) + 1, gx = static_cast<std::size_t>(res_x) + 1;
  std::vector<double> grad_y(gy * gx), grad_x(gy * gx);
  for (std::size_t i = 0; i < gy * gx; ++i) {
    const double angle = 2.0 * std::numbers::pi * uniform01(rng);
    grad_y[i] = std::sin(angle);
    grad_x[i] = std::cos(angle);
  }
  auto dot = [&](std::size_t ly, std::size_t lx, double dy, double dx) {
    const std::size_t i = ly * gx + lx;
    return grad_y[i] * dy + grad_x[i] * dx;
  };

  PerlinField f{height, width, std::vector<double>(height * width), res_y, res_x, seed};
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t cy = y / cell_y;
    const double fy = static_cast<double>(y % cell_y) / static_cast<double>(cell_y);
    const double v = fade(fy);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t cx = x / cell_x;
      const double fx = static_cast<double>(x % cell_x) / static_cast<double>(cell_x);
      const double u = fade(fx);
      const double n00 = dot(cy, cx, fy, fx);
      const double n01 = dot(cy, cx + 1, fy, fx - 1.0);
      const double n10 = dot(cy + 1, cx, fy - 1.0, fx);
      const double n11 = dot(cy + 1, cx + 1, fy - 1.0, fx - 1.0);
      // Unit gradients bound 2-D Perlin noise by sqrt(1/2); rescale to [-1, 1].
      const double n = lerp(lerp(n00, n01, u), lerp(n10, n11, u), v) * std::numbers::sqrt2;
      f.values[y * width + x] = std::clamp(n, -1.0, 1.0);
    }
  }
  return f;
}

Mask threshold_field(const PerlinField& field, double threshold, bool max_abs_normalize) {
  double scale = 1.0;
  if (max_abs_normalize) {
    double m = 0.0;
    for (double v : field.values) m = std::max(m, std::abs(v));
    scale = m > 0.0 ? 1.0 / m : 0.0;
  }
  Mask mask(field.height, field.width);
  for (std::size_t i = 0; i < field.values.size(); ++i) mask.data[i] = field.values[i] * scale >= threshold ? 1 : 0;
  return mask;
}

Mask binarize(const PerlinField& field, double threshold, bool max_abs_normalize, MaskAreaBounds bounds,
              int max_resamples) {
  if (!(threshold >= -1.0 && threshold < 1.0)) throw ArgumentError("binarize: threshold must lie in [-1, 1)");
  Mask mask = threshold_field(field, threshold, max_abs_normalize);
  auto ok = [&](const Mask& m) {
    const double a = m.area_fraction();
    return a >= bounds.min_fraction && a <= bounds.max_fraction;
  };
  for (int attempt = 1; !ok(mask); ++attempt) {
    if (attempt > max_resamples)
      throw ArgumentError("binarize: mask area stayed outside [" + std::to_string(bounds.min_fraction) + ", " +
                          std::to_string(bounds.max_fraction) + "] after " + std::to_string(max_resamples) +
                          " resamples; change the lattice resolution or threshold");
    const auto f = perlin(field.height, field.width, field.res_y, field.res_x,
                          derive_seed(field.seed, {0x7265'7361'6d70ull, static_cast<std::uint64_t>(attempt)}));
    mask = threshold_field(f, threshold, max_abs_normalize);
  }
  return mask;
}

SynthPair synthesize(const Image& image, const Image& a, const Mask& mask, double alpha, std::string texture_id) {
  if (!image.same_size(a) || image.channels != a.channels || mask.height != image.height ||
      mask.width != image.width)
    throw ShapeError("synthesize: image, texture and mask must share H x W (image " + std::to_string(image.height) +
                     "x" + std::to_string(image.width) + ", texture " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + ", mask " + std::to_string(mask.height) + "x" +
                     std::to_string(mask.width) + ")");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("synthesize: alpha must lie in (0, 1]");
  ++synth_calls;
  SynthPair out{image, mask, alpha, std::move(texture_id)};
  const std::size_t plane = image.plane();
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      if (!mask.data[i]) continue;
      const std::size_t k = c * plane + i;
      const double v = alpha == 1.0 ? a.data[k] : image.data[k] + alpha * (a.data[k] - image.data[k]);
      out.image_a.data[k] = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

std::uint64_t synthesize_call_count() { return synth_calls.load(); }

Image procedural_texture(TextureKind kind, std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  const auto c0 = random_color(rng);
  const auto c1 = random_color(rng);
  std::vector<double> t(height * width);
  switch (kind) {
    case TextureKind::stripes: {
      const double angle = std::numbers::pi * uniform01(rng);
      const double period = uniform(rng, 4.0, 24.0);
      const double phase = 2.0 * std::numbers::pi * uniform01(rng);
      const bool hard = uniform01(rng) < 0.5;
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double s = std::sin(2.0 * std::numbers::pi * (x * ca + y * sa) / period + phase);
          t[y * width + x] = hard ? (s >= 0.0 ? 1.0 : 0.0) : 0.5 + 0.5 * s;
        }
      break;
    }
    case TextureKind::checkers: {
      const double angle = std::numbers::pi * uniform01(rng);
      const double cell = uniform(rng, 4.0, 24.0);
      const double ox = cell * uniform01(rng), oy = cell * uniform01(rng);
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double u = (x * ca - y * sa + ox) / cell, v = (x * sa + y * ca + oy) / cell;
          const auto parity = (static_cast<long long>(std::floor(u)) + static_cast<long long>(std::floor(v))) & 1LL;
          t[y * width + x] = parity ? 1.0 : 0.0;
        }
      break;
    }
    case TextureKind::blurred_noise: {
      const int radius = 1 + static_cast<int>(uniform_index(rng, 6));
      for (auto& v : t) v = uniform01(rng);
      box_blur(t, height, width, radius);
      box_blur(t, height, width, radius);
      const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
      const double l = *lo, span = std::max(*hi - *lo, 1e-12);
      for (auto& v : t) v = (v - l) / span;
      break;
    }
  }
  return tint(t, height, width, c0, c1);
}

TextureSource TextureSource::builtin(std::uint64_t stream) {
  TextureSource s;
  s.stream_ = stream;
  return s;
}

TextureSource TextureSource::directory(const std::filesystem::path& dir, std::size_t height, std::size_t width) {
  if (!std::filesystem::is_directory(dir)) throw DataContractError("texture directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  TextureSource s;
  for (const auto& f : files) {
    s.images_.push_back(resize(read_image(f), height, width));
    s.ids_.push_back(f.filename().string());
  }
  if (s.images_.empty()) throw DataContractError("no texture images in " + dir.string());
  return s;
}

Image TextureSource::sample(std::uint64_t seed, std::size_t height, std::size_t width, std::string* id) const {
  Rng rng(derive_seed(seed, {stream_}));
  if (images_.empty()) {
    const auto kind = static_cast<TextureKind>(uniform_index(rng, 3));
    const std::uint64_t tex_seed = rng();
    static const char* names[] = {"stripes", "checkers", "blurred_noise"};
    if (id) *id = std::string("builtin:") + names[static_cast<int>(kind)] + ":" + std::to_string(tex_seed);
    return procedural_texture(kind, height, width, tex_seed);
  }
  const std::size_t i = uniform_index(rng, images_.size());
  if (id) *id = ids_[i];
  return resize(images_[i], height, width);
}

SynthPair sample_anomaly(const Image& image, const TextureSource& textures, const SynthOptions& options,
                         std::uint64_t seed) {
  if (options.resolutions.empty()) throw ArgumentError("sample_anomaly: no lattice resolutions configured");
  Rng rng(seed);
  auto pick_res = [&](std::size_t limit) {
    std::vector<int> allowed;
    for (int r : options.resolutions)
      if (static_cast<std::size_t>(r) <= limit) allowed.push_back(r);
    if (allowed.empty()) throw ArgumentError("sample_anomaly: every lattice resolution exceeds the image size");
    return allowed[uniform_index(rng, allowed.size())];
  };
  const int ry = pick_res(image.height);
  const int rx = pick_res(image.width);
  const std::uint64_t field_seed = rng();
  const double alpha = uniform(rng, options.alpha_min, options.alpha_max);
  const std::uint64_t texture_seed = rng();

  const auto field = perlin(image.height, image.width, ry, rx, field_seed);
  const Mask mask = binarize(field, options.threshold, true, options.bounds);
  std::string id;
  const Image texture = textures.sample(texture_seed, image.height, image.width, &id);
  // alpha_max is inclusive; uniform() can only reach it when the range is empty.
  return synthesize(image, texture, mask, std::clamp(alpha, options.alpha_min, options.alpha_max), id);
}

}  // namespace almrr
