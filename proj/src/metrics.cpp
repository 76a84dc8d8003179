#include "almrr/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "almrr/error.hpp"

namespace almrr {

namespace {

void check_set(const ScoredSet& set, const char* op) {
  if (set.scores.size() != set.labels.size())
    throw ShapeError(std::string(op) + ": " + std::to_string(set.scores.size()) + " scores but " +
                     std::to_string(set.labels.size()) + " labels");
  for (auto l : set.labels)
    if (l > 1) throw ArgumentError(std::string(op) + ": labels must be 0 or 1");
}

// Indices sorted by score; stable so tie groups keep input order.
std::vector<std::size_t> order_by_score(const std::vector<double>& s, bool descending) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (descending)
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  else
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  return idx;
}

}  // namespace

void ScoredSet::append(const ScoredSet& other) {
  scores.insert(scores.end(), other.scores.begin(), other.scores.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

double auroc(const ScoredSet& set) {
  check_set(set, "auroc");
  const auto idx = order_by_score(set.scores, false);
  // Twice the Mann-Whitney U statistic, accumulated exactly in integers:
  // each positive earns 2 per lower negative and 1 per tied negative.
  unsigned __int128 twice_u = 0;
  std::uint64_t pos = 0, neg = 0, neg_below = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < idx.size() && set.scores[idx[j]] == set.scores[idx[i]]) {
      (set.labels[idx[j]] ? gp : gn)++;
      ++j;
    }
    twice_u += static_cast<unsigned __int128>(gp) * (2 * neg_below + gn);
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0)
    throw UndefinedMetricError("auroc: needs at least one positive and one negative (got " + std::to_string(pos) +
                               " positives, " + std::to_string(neg) + " negatives)");
  return static_cast<double>(static_cast<long double>(twice_u) /
                             (2.0L * static_cast<long double>(pos) * static_cast<long double>(neg)));
}

double average_precision(const ScoredSet& set) {
  check_set(set, "average_precision");
  const std::uint64_t total_pos = static_cast<std::uint64_t>(std::count(set.labels.begin(), set.labels.end(), 1));
  if (total_pos == 0) throw UndefinedMetricError("average_precision: no positive labels");
  const auto idx = order_by_score(set.scores, true);
  long double ap = 0.0L;
  std::uint64_t tp = 0, seen = 0, prev_tp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && set.scores[idx[j]] == set.scores[idx[i]]) {
      tp += set.labels[idx[j]];
      ++j;
    }
    seen += j - i;
    if (tp != prev_tp) {
      const long double recall_step = static_cast<long double>(tp - prev_tp) / total_pos;
      const long double precision = static_cast<long double>(tp) / seen;
      ap += recall_step * precision;
      prev_tp = tp;
    }
    i = j;
  }
  return static_cast<double>(ap);
}

double image_score(const AnomalyMap& map, ImageScoreRule rule, std::size_t k) {
  if (map.scores.empty()) throw ShapeError("image_score: empty map");
  if (rule == ImageScoreRule::max) return *std::max_element(map.scores.begin(), map.scores.end());
  std::vector<double> s = map.scores;
  const std::size_t kk = std::min(std::max<std::size_t>(k, 1), s.size());
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(kk - 1), s.end(), std::greater<>());
  std::sort(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(kk), std::greater<>());
  double acc = 0.0;
  for (std::size_t i = 0; i < kk; ++i) acc += s[i];
  return acc / static_cast<double>(kk);
}

CategoryReport category_report(const std::string& category, const std::vector<ScoredImage>& images,
                               ImageScoreRule rule) {
  if (images.empty()) throw DataContractError("evaluate: category '" + category + "' has an empty test set");
  CategoryReport r;
  r.category = category;
  r.n_images = images.size();
  ScoredSet img{{}, {}, ScoreLevel::image};
  ScoredSet px{{}, {}, ScoreLevel::pixel};
  for (const auto& s : images) {
    img.scores.push_back(image_score(s.map, rule));
    img.labels.push_back(s.label);
    if (s.gt.data.empty()) {
      ++r.n_skipped;
      continue;
    }
    if (s.gt.height != s.map.height || s.gt.width != s.map.width)
      throw ShapeError("evaluate: mask and map sizes differ for " + s.map.source_image_id);
    px.scores.insert(px.scores.end(), s.map.scores.begin(), s.map.scores.end());
    px.labels.insert(px.labels.end(), s.gt.data.begin(), s.gt.data.end());
  }
  r.image_auroc = auroc(img);
  r.pixel_auroc = auroc(px);
  r.pixel_ap = average_precision(px);
  return r;
}

std::vector<CategoryReport> with_average(std::vector<CategoryReport> reports) {
  if (reports.empty()) return reports;
  CategoryReport avg;
  avg.category = "avg";
  for (const auto& r : reports) {
    avg.image_auroc += r.image_auroc;
    avg.pixel_auroc += r.pixel_auroc;
    avg.pixel_ap += r.pixel_ap;
    avg.n_images += r.n_images;
    avg.n_skipped += r.n_skipped;
  }
  const double n = static_cast<double>(reports.size());
  avg.image_auroc /= n;
  avg.pixel_auroc /= n;
  avg.pixel_ap /= n;
  reports.push_back(avg);
  return reports;
}

void write_report_csv(std::ostream& out, const std::vector<CategoryReport>& reports) {
  out << "category,image_auroc,pixel_auroc,pixel_ap,n_images\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%zu\n", r.image_auroc, r.pixel_auroc, r.pixel_ap, r.n_images);
    out << r.category << buf;
  }
}

void write_report_table(std::ostream& out, const std::vector<CategoryReport>& reports) {
  std::size_t w = 8;
  for (const auto& r : reports) w = std::max(w, r.category.size());
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-*s  %11s  %11s  %9s  %8s\n", static_cast<int>(w), "category", "image_auroc",
                "pixel_auroc", "pixel_ap", "n_images");
  out << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %11.4f  %11.4f  %9.4f  %8zu\n", static_cast<int>(w), r.category.c_str(),
                  r.image_auroc, r.pixel_auroc, r.pixel_ap, r.n_images);
    out << buf;
  }
}

}  // namespace almrr
