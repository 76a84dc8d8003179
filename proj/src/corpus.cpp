#include "almrr/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "almrr/error.hpp"
#include "almrr/rng.hpp"
#include "almrr/synth.hpp"

namespace fs = std::filesystem;

namespace almrr {

namespace {

constexpr std::uint64_t kHeldOutTextures = 0x686f6c646f7574ull;
constexpr std::uint64_t kTagCategory = 1, kTagImage = 2, kTagAnomaly = 3;

std::uint64_t category_tag(const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return h;
}

struct Palette {
  std::array<double, 3> c0, c1;
};

Palette palette(Rng& rng) {
  Palette p;
  for (auto& v : p.c0) v = uniform(rng, 0.1, 0.45);
  for (auto& v : p.c1) v = uniform(rng, 0.55, 0.9);
  return p;
}

void blur_rows(std::vector<double>& t, std::size_t h, std::size_t w, int r) {
  std::vector<double> out(t.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const auto xx = static_cast<std::size_t>((static_cast<long>(x) + k + static_cast<long>(w)) % static_cast<long>(w));
        acc += t[y * w + xx];
      }
      out[y * w + x] = acc / (2 * r + 1);
    }
  t.swap(out);
}

void blur(std::vector<double>& t, std::size_t n, int r) {
  // Separable wrap-around box blur; transposing reuses the row pass.
  auto transpose = [&] {
    std::vector<double> o(t.size());
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) o[x * n + y] = t[y * n + x];
    t.swap(o);
  };
  blur_rows(t, n, n, r);
  transpose();
  blur_rows(t, n, n, r);
  transpose();
}

}  // namespace

Image corpus_normal_image(const std::string& category, const CorpusOptions& opts, std::uint64_t seed, int split,
                          int index) {
  const std::size_t n = opts.image_size;
  Rng cat_rng(derive_seed(seed, {kTagCategory, category_tag(category)}));
  const Palette pal = palette(cat_rng);
  Rng rng(derive_seed(seed, {kTagImage, category_tag(category), static_cast<std::uint64_t>(split),
                             static_cast<std::uint64_t>(index)}));
  std::vector<double> t(n * n);
  if (category == "stripes") {
    const double angle = std::numbers::pi * uniform01(cat_rng);
    const double period = uniform(cat_rng, 8.0, 14.0);
    const double phase = 2.0 * std::numbers::pi * uniform01(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        t[y * n + x] = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (x * ca + y * sa) / period + phase);
  } else if (category == "checker") {
    const double angle = 0.25 * std::numbers::pi * uniform01(cat_rng);
    const double cell = uniform(cat_rng, 10.0, 16.0);
    const double ox = cell * uniform01(rng), oy = cell * uniform01(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double u = (x * ca - y * sa + ox) / cell, v = (x * sa + y * ca + oy) / cell;
        t[y * n + x] = ((static_cast<long long>(std::floor(u)) + static_cast<long long>(std::floor(v))) & 1LL) ? 1.0 : 0.0;
      }
  } else if (category == "filtered_noise") {
    const int radius = 2 + static_cast<int>(uniform_index(cat_rng, 2));
    for (auto& v : t) v = uniform01(rng);
    blur(t, n, radius);
    blur(t, n, radius);
    // Box-filtered uniform noise concentrates near 0.5; stretch it back.
    for (auto& v : t) v = std::clamp(0.5 + (v - 0.5) * 4.0, 0.0, 1.0);
  } else {
    throw ArgumentError("unknown corpus category '" + category + "' (expected stripes, checker or filtered_noise)");
  }
  Image img(3, n, n);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n * n; ++i) {
      const double v = pal.c0[c] + (pal.c1[c] - pal.c0[c]) * t[i] + 0.02 * normal01(rng);
      img.data[c * n * n + i] = std::clamp(v, 0.0, 1.0);
    }
  return quantize8(img);
}

CorpusAnomaly corpus_anomaly(const std::string& category, const CorpusOptions& opts, std::uint64_t seed, int index) {
  CorpusAnomaly out;
  out.base = corpus_normal_image(category, opts, seed, 2, index);
  const auto textures = TextureSource::builtin(kHeldOutTextures);
  SynthOptions so;
  so.alpha_min = opts.alpha_min;
  so.alpha_max = opts.alpha_max;
  const std::size_t n = opts.image_size;
  for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
    const auto pair = sample_anomaly(
        out.base, textures, so,
        derive_seed(seed, {kTagAnomaly, category_tag(category), static_cast<std::uint64_t>(index), attempt}));
    out.image = quantize8(pair.image_a);
    // Keep only pixels that still differ after 8-bit quantization, so the
    // written mask is exactly the changed support.
    out.mask = Mask(n, n, 0);
    for (std::size_t i = 0; i < n * n; ++i) {
      if (!pair.mask.data[i]) continue;
      for (std::size_t c = 0; c < 3; ++c)
        if (out.image.data[c * n * n + i] != out.base.data[c * n * n + i]) out.mask.data[i] = 1;
    }
    const double f = out.mask.area_fraction();
    if (f >= so.bounds.min_fraction && f <= so.bounds.max_fraction) return out;
  }
  throw Error("corpus: could not draw an anomaly within the area bounds for " + category + " #" +
              std::to_string(index));
}

CorpusSummary make_synth_corpus(const fs::path& out_dir, std::uint64_t seed, const CorpusOptions& opts) {
  CorpusSummary s;
  auto name = [](int i) {
    std::ostringstream os;
    os << std::setw(3) << std::setfill('0') << i;
    return os.str();
  };
  for (const auto& cat : opts.categories) {
    const fs::path base = out_dir / cat;
    fs::create_directories(base / "train" / "good");
    fs::create_directories(base / "test" / "good");
    fs::create_directories(base / "test" / "defect");
    fs::create_directories(base / "ground_truth" / "defect");
    for (int i = 0; i < opts.train_per_category; ++i) {
      write_png(base / "train" / "good" / (name(i) + ".png"), corpus_normal_image(cat, opts, seed, 0, i));
      ++s.files_written;
    }
    for (int i = 0; i < opts.test_good; ++i) {
      write_png(base / "test" / "good" / (name(i) + ".png"), corpus_normal_image(cat, opts, seed, 1, i));
      ++s.files_written;
    }
    for (int i = 0; i < opts.test_anomalous; ++i) {
      const auto a = corpus_anomaly(cat, opts, seed, i);
      write_png(base / "test" / "defect" / (name(i) + ".png"), a.image);
      write_mask_png(base / "ground_truth" / "defect" / (name(i) + "_mask.png"), a.mask);
      s.mask_fractions.push_back(a.mask.area_fraction());
      s.files_written += 2;
    }
  }
  return s;
}

}  // namespace almrr
