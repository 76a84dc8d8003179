#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "almrr/checkpoint.hpp"
#include "almrr/config.hpp"
#include "almrr/dataset.hpp"
#include "almrr/metrics.hpp"
#include "almrr/objectives.hpp"

namespace almrr {

/// Backbone + reconstruction module + optional refinement head sharing one
/// parameter store.
template <typename T>
class Model {
 public:
  explicit Model(const RunConfig& cfg);
  /// Rebuilds the model described by `cfg` and loads every parameter from
  /// `ckpt`; the two must describe the same parameter set.
  Model(const RunConfig& cfg, const Checkpoint& ckpt);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const RunConfig& config() const { return cfg_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  const FeatureEmbedder<T>& embedder() const { return embedder_; }
  const Mfrm<T>& mfrm() const { return mfrm_; }
  const Frm<T>* frm() const { return frm_ ? &*frm_ : nullptr; }

  /// Differentiable per-image forward for training. `phi` is the embedding of
  /// the clean image; `pair` the synthesized sample.
  TotalLoss<T> loss(const FeatureStack<T>& phi, const Image& augmented, const Mask& mask) const;

  /// Inference path: embed -> reconstruct -> refine (or L2 scoring without the
  /// refinement head). Never synthesizes.
  AnomalyMap score(const Image& image, const std::string& id = {}) const;

 private:
  RunConfig cfg_;
  ParamStore<T> store_;
  FeatureEmbedder<T> embedder_;
  Mfrm<T> mfrm_;
  std::optional<Frm<T>> frm_;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::ostream* progress = nullptr;
  /// Stops after this many optimizer steps when non-negative.
  std::int64_t max_steps = -1;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<LossReport> log;
  std::uint64_t steps = 0;
  double seconds = 0.0;
};

/// Trains one model on anomaly-free images (already sized to cfg.image_size).
/// Writes train_log.csv, periodic checkpoint_epochNNNN.almr files and the
/// final model.almr into opts.out_dir. Throws NumericalError (after writing
/// nan_dump.json) when a loss turns non-finite.
TrainResult train(const RunConfig& cfg, const std::vector<Image>& images, const TrainOptions& opts);

/// Loads the train split of one category (images only) and trains on it.
TrainResult train_category(const RunConfig& cfg, const DatasetHandle& data, const std::string& category,
                           const TrainOptions& opts);

/// Precision-erased inference handle.
class Predictor {
 public:
  static Predictor load(const std::filesystem::path& checkpoint);
  static Predictor load(const Checkpoint& ckpt);
  /// Throws ShapeError listing every shape-relevant key on which the
  /// checkpoint's config differs from `expected`.
  static Predictor load(const std::filesystem::path& checkpoint, const RunConfig& expected);

  const RunConfig& config() const { return cfg_; }
  AnomalyMap score(const Image& image, const std::string& id = {}) const;
  /// Parameters re-serialized into a checkpoint (same bytes as the source).
  Checkpoint checkpoint() const;

 private:
  RunConfig cfg_;
  std::variant<std::shared_ptr<Model<float>>, std::shared_ptr<Model<double>>> model_;
};

struct InferOptions {
  std::filesystem::path out_dir;
  bool overlay = false;
};

struct InferRecord {
  std::string image_id;
  double image_score = 0.0;
  std::filesystem::path heatmap;
};

/// Scores one image file or every image in a directory; writes
/// <id>_heatmap.png (score x 255), optional <id>_overlay.png and scores.csv.
std::vector<InferRecord> infer(const Predictor& model, const std::filesystem::path& input, const InferOptions& opts);

/// Scores the test split of a category and reports metrics.
CategoryReport evaluate_category(const Predictor& model, const DatasetHandle& data, const std::string& category,
                                 std::vector<ScoredImage>* scored = nullptr);

/// Scores every category with <checkpoint_dir>/<category>/model.almr (or one
/// shared checkpoint file) and appends the unweighted average row.
std::vector<CategoryReport> evaluate(const DatasetHandle& data, const std::filesystem::path& checkpoints);

struct BenchResult {
  std::vector<double> seconds;  // per-image reconstruction latency
  double mean = 0.0;
  double median = 0.0;
};

/// Times the reconstruction module alone on `n_images` random inputs.
BenchResult bench_reconstruction(const RunConfig& cfg, int n_images, std::uint64_t seed = 0);

/// RGB overlay of a score map on an image (red for high scores).
Image overlay_heatmap(const Image& image, const AnomalyMap& map);

}  // namespace almrr
