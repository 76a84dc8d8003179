#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "almrr/frm.hpp"

namespace almrr {

enum class ScoreLevel { image, pixel };

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 0 = normal, 1 = anomalous
  ScoreLevel level = ScoreLevel::pixel;

  void append(const ScoredSet& other);
};

/// P(score_pos > score_neg) + 0.5 P(score_pos == score_neg), via midranks.
double auroc(const ScoredSet& set);

/// sum_k (R_k - R_{k-1}) P_k over descending distinct score thresholds; tied
/// scores enter together.
double average_precision(const ScoredSet& set);

enum class ImageScoreRule { max, top_k_mean };

/// Image-level anomaly score derived from a map.
double image_score(const AnomalyMap& map, ImageScoreRule rule = ImageScoreRule::max, std::size_t k = 100);

struct CategoryReport {
  std::string category;
  double image_auroc = 0.0;
  double pixel_auroc = 0.0;
  double pixel_ap = 0.0;
  std::size_t n_images = 0;
  std::size_t n_skipped = 0;  // anomalous images without a ground-truth mask
};

/// One scored test image.
struct ScoredImage {
  AnomalyMap map;
  Mask gt;             // empty (0x0) when the ground truth is missing
  std::uint8_t label;  // 1 = anomalous
};

/// Image AUROC over image scores and pooled pixel AUROC / AP over every
/// image with a usable mask.
CategoryReport category_report(const std::string& category, const std::vector<ScoredImage>& images,
                               ImageScoreRule rule = ImageScoreRule::max);

/// Appends the unweighted "avg" row.
std::vector<CategoryReport> with_average(std::vector<CategoryReport> reports);

void write_report_csv(std::ostream& out, const std::vector<CategoryReport>& reports);
void write_report_table(std::ostream& out, const std::vector<CategoryReport>& reports);

}  // namespace almrr
