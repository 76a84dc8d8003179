#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "almrr/image.hpp"

namespace almrr {

struct CorpusOptions {
  std::size_t image_size = 128;
  int train_per_category = 128;
  int test_good = 20;
  int test_anomalous = 20;
  double alpha_min = 0.5;
  double alpha_max = 1.0;
  std::vector<std::string> categories{"stripes", "checker", "filtered_noise"};
};

/// One anomalous test sample before it is written to disk. `image` differs
/// from `base` exactly where `mask` is set (both are 8-bit quantized).
struct CorpusAnomaly {
  Image base;
  Image image;
  Mask mask;
};

/// Anomaly-free sample `index` of a category. `split` separates train (0)
/// and test (1) draws.
Image corpus_normal_image(const std::string& category, const CorpusOptions& opts, std::uint64_t seed, int split,
                          int index);

CorpusAnomaly corpus_anomaly(const std::string& category, const CorpusOptions& opts, std::uint64_t seed, int index);

struct CorpusSummary {
  std::size_t files_written = 0;
  std::vector<double> mask_fractions;
};

/// Writes an mvtec-layout corpus: <cat>/train/good, <cat>/test/{good,defect},
/// <cat>/ground_truth/defect/<id>_mask.png.
CorpusSummary make_synth_corpus(const std::filesystem::path& out_dir, std::uint64_t seed,
                                const CorpusOptions& opts = {});

}  // namespace almrr
