#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "almrr/image.hpp"

namespace almrr {

enum class Layout { mvtec, flat };
enum class Split { train, test };

Layout parse_layout(const std::string& s);

struct DatasetItem {
  std::string category;
  std::string id;  // unique within the category and split, e.g. "crack/003"
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
  std::uint8_t label = 0;  // 1 = anomalous
};

/// File-level view of a dataset; images are decoded on demand.
///
/// mvtec: <cat>/train/good/*, <cat>/test/<defect>/*,
///        <cat>/ground_truth/<defect>/<stem>_mask.*
/// flat:  <cat>/train/*, <cat>/test/*, <cat>/masks/<stem>_mask.* (or <stem>.*);
///        a test image is anomalous iff it has a mask.
struct DatasetHandle {
  std::filesystem::path root;
  Layout layout = Layout::mvtec;
  std::vector<std::string> categories;
  std::vector<DatasetItem> train;
  std::vector<DatasetItem> test;
  /// Anomalous test images without ground truth and skipped files.
  std::vector<std::string> validation_report;

  std::vector<DatasetItem> items(const std::string& category, Split split) const;
};

/// Lists a dataset. Throws DataContractError if the root is missing or a
/// train split holds anything other than anomaly-free images.
DatasetHandle ingest(const std::filesystem::path& root, Layout layout = Layout::mvtec,
                     const std::vector<std::string>& only_categories = {});

struct LoadedItem {
  DatasetItem item;
  Image image;  // 3 x size x size
  Mask mask;    // size x size; all zero for anomaly-free items, 0 x 0 when missing
};

/// Decodes and resizes items. Undecodable images are skipped and reported in
/// `warnings`. Masks are only read when `with_masks` is set.
std::vector<LoadedItem> load_items(const std::vector<DatasetItem>& items, std::size_t size, bool with_masks,
                                   std::vector<std::string>* warnings = nullptr);

}  // namespace almrr
