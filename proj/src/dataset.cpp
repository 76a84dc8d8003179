#include "almrr/dataset.hpp"

#include <algorithm>

#include "almrr/error.hpp"

namespace fs = std::filesystem;

namespace almrr {

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs ? e.is_directory() : (e.is_regular_file() && is_image_file(e.path()))) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<fs::path> find_mask(const fs::path& dir, const std::string& stem, bool allow_bare_stem) {
  for (const auto& p : sorted_entries(dir, false)) {
    const auto s = p.stem().string();
    if (s == stem + "_mask" || (allow_bare_stem && s == stem)) return p;
  }
  return std::nullopt;
}

void ingest_mvtec(DatasetHandle& h, const std::string& cat) {
  const fs::path base = h.root / cat;
  const fs::path train = base / "train";
  for (const auto& sub : sorted_entries(train, true)) {
    if (sub.filename() != "good")
      throw DataContractError("train split of '" + cat + "' contains '" + sub.filename().string() +
                              "'; training data must be anomaly-free (only train/good is allowed)");
  }
  if (!sorted_entries(train, false).empty())
    throw DataContractError("train split of '" + cat + "' has images outside train/good");
  for (const auto& p : sorted_entries(train / "good", false))
    h.train.push_back({cat, "good/" + p.stem().string(), p, std::nullopt, 0});
  for (const auto& defect_dir : sorted_entries(base / "test", true)) {
    const std::string defect = defect_dir.filename().string();
    const bool good = defect == "good";
    for (const auto& p : sorted_entries(defect_dir, false)) {
      DatasetItem it{cat, defect + "/" + p.stem().string(), p, std::nullopt, static_cast<std::uint8_t>(good ? 0 : 1)};
      if (!good) {
        it.mask = find_mask(base / "ground_truth" / defect, p.stem().string(), false);
        if (!it.mask) h.validation_report.push_back(cat + ": no ground-truth mask for test/" + it.id);
      }
      h.test.push_back(std::move(it));
    }
  }
}

void ingest_flat(DatasetHandle& h, const std::string& cat) {
  const fs::path base = h.root / cat;
  if (!sorted_entries(base / "train", true).empty())
    throw DataContractError("flat layout: train split of '" + cat + "' must not contain subdirectories");
  for (const auto& p : sorted_entries(base / "train", false))
    h.train.push_back({cat, p.stem().string(), p, std::nullopt, 0});
  for (const auto& p : sorted_entries(base / "test", false)) {
    DatasetItem it{cat, p.stem().string(), p, find_mask(base / "masks", p.stem().string(), true), 0};
    it.label = it.mask ? 1 : 0;
    h.test.push_back(std::move(it));
  }
}

}  // namespace

Layout parse_layout(const std::string& s) {
  if (s == "mvtec") return Layout::mvtec;
  if (s == "flat") return Layout::flat;
  throw ArgumentError("unknown dataset layout '" + s + "' (expected mvtec or flat)");
}

std::vector<DatasetItem> DatasetHandle::items(const std::string& category, Split split) const {
  std::vector<DatasetItem> out;
  for (const auto& it : split == Split::train ? train : test)
    if (it.category == category) out.push_back(it);
  return out;
}

DatasetHandle ingest(const fs::path& root, Layout layout, const std::vector<std::string>& only_categories) {
  if (!fs::is_directory(root)) throw DataContractError("dataset root not found: " + root.string());
  DatasetHandle h;
  h.root = root;
  h.layout = layout;
  for (const auto& d : sorted_entries(root, true)) {
    if (!fs::is_directory(d / "train") && !fs::is_directory(d / "test")) continue;
    const std::string cat = d.filename().string();
    if (!only_categories.empty() &&
        std::find(only_categories.begin(), only_categories.end(), cat) == only_categories.end())
      continue;
    h.categories.push_back(cat);
    if (layout == Layout::mvtec) ingest_mvtec(h, cat);
    else ingest_flat(h, cat);
  }
  for (const auto& want : only_categories)
    if (std::find(h.categories.begin(), h.categories.end(), want) == h.categories.end())
      throw DataContractError("category '" + want + "' not found under " + root.string());
  if (h.categories.empty()) throw DataContractError("no categories found under " + root.string());
  return h;
}

std::vector<LoadedItem> load_items(const std::vector<DatasetItem>& items, std::size_t size, bool with_masks,
                                   std::vector<std::string>* warnings) {
  std::vector<LoadedItem> out;
  for (const auto& it : items) {
    LoadedItem li{it, {}, {}};
    try {
      li.image = resize(read_image(it.image, true), size, size);
    } catch (const Error& e) {
      if (warnings) warnings->push_back("skipped " + it.image.string() + ": " + e.what());
      continue;
    }
    if (with_masks) {
      if (it.label == 0) li.mask = Mask(size, size, 0);
      else if (it.mask) li.mask = resize(read_mask(*it.mask), size, size);
    }
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace almrr
